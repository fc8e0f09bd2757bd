"""
Command-line entry point: ``raman-lambda simulate|decompose|scaling SCENARIO``.

``SCENARIO`` is a JSON file, or the word ``default`` for the bundled scenario.

Exit codes
----------
0  success
1  malformed scenario or command line
2  fatal validation failure (zero detuning)
3  truncation leakage above 1e-6 with ``--strict-truncation``
4  fitted exponent outside [2.6, 3.4] with ``--assert-cubic``
"""

from __future__ import annotations

import argparse
import datetime as _dt
import platform
import sys
import time
import warnings
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .analysis import (
    DEFAULT_WINDOW,
    LEAKAGE_TOL,
    coarse_vs_fine_report,
    factorization_error,
    lambda_scaling_study,
    truncation_leakage,
)
from .hamiltonian import ConfigError, ValidationError, derive_effective_params, validate_config
from .hilbert import LayoutError, hermiticity_defect
from .perturbation import (
    DecompositionError,
    constant_of_motion_residual,
    decompose,
    minimal_solution_residual,
    operator_norms,
    recursion_vs_closed_form,
)
from .scenario import (
    Scenario,
    ScenarioError,
    bundled_scenario_path,
    dumps_json,
    load_scenario,
    write_csv,
    write_json,
    write_matrix,
)

EXIT_OK = 0
EXIT_MALFORMED = 1
EXIT_INVALID = 2
EXIT_TRUNCATION = 3
EXIT_NOT_CUBIC = 4

CUBIC_RANGE = (2.6, 3.4)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_MALFORMED, f"{self.prog}: error: {message}\n")


def _lambda_list(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="raman-lambda", description=__doc__.splitlines()[1])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("scenario", help="scenario JSON file, or 'default'")
    common.add_argument("--out", help="output directory (default: scenario output.path or '.')")
    common.add_argument("--order", type=int, help="perturbative order (overrides run.order)")
    common.add_argument("--dry-run", action="store_true", help="validate and report only")
    common.add_argument(
        "--window", type=int, default=DEFAULT_WINDOW,
        help="motional window for operator norms (0 = full space)",
    )

    sim = sub.add_parser("simulate", parents=[common], help="populations, fidelities, errors")
    sim.add_argument("--strict-truncation", action="store_true")

    dec = sub.add_parser("decompose", parents=[common], help="perturbative decomposition report")
    dec.add_argument("--dump-matrices", action="store_true")

    sc = sub.add_parser("scaling", parents=[common], help="error vs lambda and fitted exponent")
    sc.add_argument("--lambdas", type=_lambda_list, default=[0.02, 0.04, 0.08])
    sc.add_argument("--tau", type=float, default=50.0)
    sc.add_argument("--assert-cubic", action="store_true")
    return parser


def _fail(code: int, message: str) -> int:
    print(f"raman-lambda: {message}", file=sys.stderr)
    return code


def _load(path: str) -> Scenario:
    if path == "default" and not Path(path).exists():
        path = str(bundled_scenario_path())
    return load_scenario(path)


def _output_dir(args, scenario: Scenario) -> Path:
    out = Path(args.out or scenario.output_path or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _window(args) -> Optional[int]:
    return None if args.window == 0 else args.window


def _write_sidecar(out: Path, name: str, args, started: float) -> None:
    # run metadata lives apart from the data files so those stay reproducible
    write_json(out / f"{name}.meta.json", {
        "command": args.command,
        "argv": sys.argv[1:],
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "finished_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "elapsed_s": round(time.perf_counter() - started, 3),
    })


def cmd_simulate(args, scenario: Scenario) -> int:
    started = time.perf_counter()
    order = args.order or scenario.run.order
    if order < 2:
        return _fail(EXIT_MALFORMED, "simulate needs order >= 2")
    config = scenario.config
    decomp = decompose(config, order)
    tau = scenario.run.tau_grid()
    initial = (scenario.run.initial_level, list(scenario.run.initial_occupations))
    series = coarse_vs_fine_report(config, decomp, initial, tau)
    report = factorization_error(config, decomp, tau, _window(args))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report.leakage = truncation_leakage(config, tau, min(2, min(config.layout.cutoffs) - 1), initial)
    report.notes = {
        "p3_peak_frequency": series.metadata["p3_peak_frequency"],
        "p3_max": series.metadata["p3_max"],
        "lambda": validate_config(config).lam,
        "order": order,
        "cutoffs": list(config.layout.cutoffs),
    }

    out = _output_dir(args, scenario)
    columns = {"tau": tau}
    for name in ("P1", "P2", "P3", "fid_eff", "fid_factored"):
        columns[name] = series.channels[name]
    write_csv(out / "timeseries.csv", columns)
    write_json(out / "error_report.json", report.as_dict())
    _write_sidecar(out, "simulate", args, started)

    if report.leakage > LEAKAGE_TOL:
        msg = f"truncation leakage {report.leakage:.3e} exceeds {LEAKAGE_TOL:g}"
        if args.strict_truncation:
            return _fail(EXIT_TRUNCATION, msg)
        print(f"raman-lambda: warning: {msg}", file=sys.stderr)
    return EXIT_OK


def cmd_decompose(args, scenario: Scenario) -> int:
    started = time.perf_counter()
    order = args.order or scenario.run.order
    config = scenario.config
    decomp = decompose(config, order)
    h0 = decomp.h0
    report = {
        "order": order,
        "lambda": validate_config(config).lam,
        "dim": config.layout.dim,
        "norms": {
            "C": operator_norms(decomp.scaled_c),
            "Z": operator_norms(decomp.scaled_z),
        },
        "effective_params": derive_effective_params(config).as_dict(),
        "closed_form_max_deviation": recursion_vs_closed_form(config, decomp),
        "minimal_solution_residuals": [minimal_solution_residual(z, decomp.block) for z in decomp.scaled_z],
        "constant_of_motion_residuals": [constant_of_motion_residual(c, h0) for c in decomp.scaled_c],
        "hermiticity_defects": {
            "C": [hermiticity_defect(c) for c in decomp.scaled_c],
            "Z": [hermiticity_defect(z) for z in decomp.scaled_z],
        },
    }
    out = _output_dir(args, scenario)
    write_json(out / "decomposition.json", report)
    if args.dump_matrices:
        for n, (c, z) in enumerate(zip(decomp.scaled_c, decomp.scaled_z), start=1):
            write_matrix(out / f"C{n}.bin", c)
            write_matrix(out / f"Z{n}.bin", z)
    _write_sidecar(out, "decompose", args, started)
    return EXIT_OK


def cmd_scaling(args, scenario: Scenario) -> int:
    started = time.perf_counter()
    lambdas = args.lambdas
    if len(lambdas) < 3:
        return _fail(EXIT_MALFORMED, f"need >= 3 lambda values, got {len(lambdas)}")
    if any(lam <= 0 for lam in lambdas):
        return _fail(EXIT_MALFORMED, "lambda values must be positive")
    config = scenario.config
    if config.lam == 0.0:
        return _fail(EXIT_MALFORMED, "scenario has lambda = 0 and cannot be rescaled")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = lambda_scaling_study(config, lambdas, args.tau, _window(args))
    for w in caught:
        print(f"raman-lambda: warning: {w.message}", file=sys.stderr)

    out = _output_dir(args, scenario)
    write_json(out / "scaling.json", report.as_dict())
    columns = {"lambda": report.lambdas}
    columns.update(report.errors)
    write_csv(out / "scaling.csv", columns)
    _write_sidecar(out, "scaling", args, started)

    exponent = report.fits["factored"].exponent
    print(f"fitted exponent {exponent:.4f}")
    if args.assert_cubic and not CUBIC_RANGE[0] <= exponent <= CUBIC_RANGE[1]:
        return _fail(EXIT_NOT_CUBIC, f"exponent {exponent:.4f} outside {list(CUBIC_RANGE)}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "decompose": cmd_decompose, "scaling": cmd_scaling}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = _load(args.scenario)
        report = validate_config(scenario.config)
    except ValidationError as exc:
        return _fail(EXIT_INVALID, f"invalid scenario: {exc}")
    except (ScenarioError, ConfigError, LayoutError) as exc:
        return _fail(EXIT_MALFORMED, f"malformed scenario: {exc}")
    if args.order is not None and not 1 <= args.order <= 6:
        return _fail(EXIT_MALFORMED, "--order must be in 1..6")
    for msg in report.warnings:
        print(f"raman-lambda: warning: {msg}", file=sys.stderr)
    if args.dry_run:
        sys.stdout.write(dumps_json(report.as_dict()))
        return EXIT_OK
    try:
        return COMMANDS[args.command](args, scenario)
    except (DecompositionError, ValueError) as exc:
        return _fail(EXIT_MALFORMED, str(exc))


if __name__ == "__main__":
    sys.exit(main())
