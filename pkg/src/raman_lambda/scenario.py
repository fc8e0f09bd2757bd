"""
Scenario files (JSON in), results (CSV/JSON out) and the dense matrix dump.

Numbers are written with 17 significant digits and no locale, so identical
inputs give byte-identical files.

Matrix dump layout: a 16-byte header (8-byte magic ``b"RAMANMAT"`` then the
dimension as little-endian uint64) followed by ``dim * dim`` complex entries,
row-major, each as little-endian float64 real part then imaginary part.
"""

from __future__ import annotations

import cmath
import json
import math
import struct
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .hamiltonian import RamanConfig, ValidationError
from .hilbert import build_space_layout

MATRIX_MAGIC = b"RAMANMAT"
_HEADER = struct.Struct("<8sQ")


class ScenarioError(ValueError):
    """Malformed scenario document."""


@dataclass(frozen=True)
class RunSettings:
    tau_max: float
    tau_points: int
    order: int
    initial_level: int
    initial_occupations: tuple

    def tau_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.tau_max, self.tau_points)


@dataclass(frozen=True)
class Scenario:
    config: RamanConfig
    run: RunSettings
    output_format: str = "csv"
    output_path: Optional[str] = None


def bundled_scenario_path(name: str = "default") -> Path:
    return Path(str(resources.files("raman_lambda") / "scenarios" / f"{name}.json"))


def _section(doc: dict, key: str) -> dict:
    if key not in doc:
        raise ScenarioError(f"missing section {key!r}")
    value = doc[key]
    if not isinstance(value, dict):
        raise ScenarioError(f"section {key!r} must be an object")
    return value


def _number(section: dict, key: str, where: str, default: Any = None) -> float:
    if key not in section:
        if default is not None:
            return default
        raise ScenarioError(f"missing key {where}.{key}")
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{where}.{key} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ScenarioError(f"{where}.{key} must be finite")
    return float(value)


def _integer(section: dict, key: str, where: str, default: Optional[int] = None) -> int:
    value = _number(section, key, where, None if default is None else float(default))
    if value != int(value):
        raise ScenarioError(f"{where}.{key} must be an integer")
    return int(value)


def _array(section: dict, key: str, where: str, length: int) -> List[float]:
    if key not in section:
        raise ScenarioError(f"missing key {where}.{key}")
    value = section[key]
    if not isinstance(value, list) or len(value) != length:
        raise ScenarioError(f"{where}.{key} must be a list with one entry per axis ({length})")
    return [_number({"v": v}, "v", f"{where}.{key}[{i}]") for i, v in enumerate(value)]


def _coupling(section: dict, key: str) -> complex:
    if key not in section or not isinstance(section[key], dict):
        raise ScenarioError(f"lasers.{key} must be an object with 'mag' and 'phase'")
    c = section[key]
    mag = _number(c, "mag", f"lasers.{key}")
    phase = _number(c, "phase", f"lasers.{key}", 0.0)
    if mag < 0:
        raise ScenarioError(f"lasers.{key}.mag must be >= 0")
    return cmath.rect(mag, phase)


def parse_scenario(doc: Any) -> Scenario:
    """Build a :class:`Scenario` from a decoded JSON document.

    Raises :class:`ScenarioError` for malformed input and
    :class:`ValidationError` for a zero detuning.
    """
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    trap = _section(doc, "trap")
    atom = _section(doc, "atom")
    lasers = _section(doc, "lasers")
    run = _section(doc, "run")
    output = doc.get("output", {})
    if not isinstance(output, dict):
        raise ScenarioError("section 'output' must be an object")

    axes = trap.get("axes")
    if not isinstance(axes, list) or not axes:
        raise ScenarioError("trap.axes must be a non-empty list of Fock cutoffs")
    cutoffs = [_integer({"v": c}, "v", f"trap.axes[{i}]") for i, c in enumerate(axes)]
    try:
        layout = build_space_layout(cutoffs)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    n = layout.n_axes

    nu = _number(trap, "nu", "trap")
    omega = [_number(atom, f"omega{l}", "atom") for l in (1, 2, 3)]
    delta = _number(lasers, "delta", "lasers")
    g13, g23 = _coupling(lasers, "g13"), _coupling(lasers, "g23")
    eta13 = _array(lasers, "eta13", "lasers", n)
    eta23 = _array(lasers, "eta23", "lasers", n)

    units = doc.get("units", {"system": "delta"})
    system = units.get("system", "delta") if isinstance(units, dict) else None
    if system not in ("delta", "si"):
        raise ScenarioError("units.system must be 'delta' or 'si'")
    if delta == 0.0:
        raise ValidationError("detuning delta must be nonzero")
    if system == "si":
        # angular frequencies in rad/s; rescale so that |delta| = 1
        scale = 1.0 / abs(delta)
        nu, delta = nu * scale, delta * scale
        omega = [w * scale for w in omega]
        g13, g23 = g13 * scale, g23 * scale

    config = RamanConfig(
        omega=tuple(omega), nu=nu, delta=delta, g13=g13, g23=g23,
        eta13=tuple(eta13), eta23=tuple(eta23), layout=layout,
    )

    tau_max = _number(run, "tau_max", "run")
    tau_points = _integer(run, "tau_points", "run")
    order = _integer(run, "order", "run", 2)
    if tau_max <= 0 or tau_points < 2:
        raise ScenarioError("run.tau_max must be > 0 and run.tau_points >= 2")
    if not 1 <= order <= 6:
        raise ScenarioError("run.order must be in 1..6")
    initial = run.get("initial", {"level": 1})
    if not isinstance(initial, dict):
        raise ScenarioError("run.initial must be an object")
    level = _integer(initial, "level", "run.initial")
    occ = initial.get("occupations", [0] * n)
    if not isinstance(occ, list) or len(occ) != n:
        raise ScenarioError("run.initial.occupations must have one entry per axis")
    occ = tuple(_integer({"v": v}, "v", "run.initial.occupations") for v in occ)
    if level not in (1, 2, 3) or any(not 0 <= o < c for o, c in zip(occ, cutoffs)):
        raise ScenarioError("run.initial is outside the truncated space")

    fmt = output.get("format", "csv")
    if fmt != "csv":
        raise ScenarioError(f"unsupported output.format {fmt!r}")
    path = output.get("path")
    if path is not None and not isinstance(path, str):
        raise ScenarioError("output.path must be a string")

    return Scenario(
        config=config,
        run=RunSettings(tau_max, tau_points, order, level, occ),
        output_format=fmt,
        output_path=path,
    )


def load_scenario(path: str | Path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc}") from None
    return parse_scenario(doc)


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def dumps_json(obj: Any, indent: int = 2) -> str:
    """Deterministic JSON with 17-significant-digit floats (NaN/inf as null)."""

    def enc(o: Any, level: int) -> str:
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if o is None or o is True or o is False:
            return {None: "null", True: "true", False: "false"}[o]
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            return format_float(o) if math.isfinite(o) else "null"
        if isinstance(o, str):
            return json.dumps(o, ensure_ascii=True)
        if isinstance(o, np.ndarray):
            return enc(o.tolist(), level)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{enc(str(k), 0)}: {enc(v, level + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            if all(not isinstance(v, (dict, list, tuple)) for v in o):
                return "[" + ", ".join(enc(v, level + 1) for v in o) + "]"
            return "[\n" + ",\n".join(pad + enc(v, level + 1) for v in o) + "\n" + end + "]"
        raise TypeError(f"cannot serialise {type(o).__name__}")

    return enc(obj, 0) + "\n"


def write_json(path: Path, obj: Any) -> None:
    path.write_text(dumps_json(obj), encoding="utf-8", newline="\n")


def write_csv(path: Path, columns: Dict[str, Sequence[float]]) -> None:
    names = list(columns)
    rows = zip(*(columns[k] for k in names))
    lines = [",".join(names)]
    lines += [",".join(format_float(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def write_matrix(path: Path, matrix: np.ndarray) -> None:
    m = np.ascontiguousarray(matrix, dtype="<c16")
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("only square matrices can be dumped")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MATRIX_MAGIC, m.shape[0]))
        fh.write(m.tobytes(order="C"))


def read_matrix(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError("truncated matrix file")
    magic, dim = _HEADER.unpack_from(data)
    if magic != MATRIX_MAGIC:
        raise ValueError("not a matrix dump (bad magic)")
    body = data[_HEADER.size:]
    if len(body) != 16 * dim * dim:
        raise ValueError(f"expected {16 * dim * dim} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<c16").reshape(dim, dim).copy()
