"""
Diagnostics of the coarse-grained / fine factorisation.

Operator distances are spectral norms. By default they are restricted to the
low-lying motional window (input states with every axis occupation below
``window``): on the full truncated space the norm is dominated by the
highest retained Fock states, whose dynamics is an artefact of truncation.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .hamiltonian import RamanConfig, build_rotating_parts, validate_config
from .hilbert import SpaceLayout, basis_state, dagger
from .perturbation import PerturbativeDecomposition, decompose
from .propagators import (
    HermitianExponential,
    effective_propagator,
    factor_kernel,
    fine_propagator,
    fine_propagator_prime,
    linearized_fine_propagator,
    rotated_generators,
    second_order_group_propagator,
)

DEFAULT_WINDOW = 3
LEAKAGE_TOL = 1e-6
PERTURBATIVE_MAX = 0.15

InitialState = Union[np.ndarray, Tuple[int, Sequence[int]], dict]


def window_columns(layout: SpaceLayout, window: Optional[int]) -> np.ndarray:
    """Basis indices whose occupations are all below ``window`` (all if None)."""
    if window is None:
        return np.arange(layout.dim)
    occ = layout.fock_occupations()
    return np.flatnonzero((occ < window).all(axis=1))


def operator_distance(a: np.ndarray, b: np.ndarray, columns: Optional[np.ndarray] = None) -> float:
    d = a - b if columns is None else (a - b)[:, columns]
    return float(np.linalg.norm(d, 2))


def frobenius_distance(a: np.ndarray, b: np.ndarray, columns: Optional[np.ndarray] = None) -> float:
    d = a - b if columns is None else (a - b)[:, columns]
    return float(np.linalg.norm(d))


@dataclass
class ScalingFit:
    """Least-squares slope of ``log(error)`` against ``log(lambda)``."""

    exponent: float
    stderr: float
    ci95: Tuple[float, float]
    residuals: np.ndarray
    ratios: np.ndarray

    def as_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "stderr": self.stderr,
            "ci95": list(self.ci95),
            "residuals": self.residuals.tolist(),
            "ratios": self.ratios.tolist(),
        }


def fit_power_law(lambdas: Sequence[float], errors: Sequence[float]) -> ScalingFit:
    lam = np.asarray(lambdas, dtype=float)
    err = np.asarray(errors, dtype=float)
    if lam.size < 3:
        raise ValueError("need >= 3 points for a scaling fit")
    if np.any(err <= 0.0) or np.ptp(err) == 0.0:
        raise ValueError("degenerate scaling fit: errors are zero or identical")
    x, y = np.log(lam), np.log(err)
    fit = stats.linregress(x, y)
    t = stats.t.ppf(0.975, lam.size - 2)
    order = np.argsort(lam)
    return ScalingFit(
        exponent=float(fit.slope),
        stderr=float(fit.stderr),
        ci95=(float(fit.slope - t * fit.stderr), float(fit.slope + t * fit.stderr)),
        residuals=y - (fit.intercept + fit.slope * x),
        ratios=err[order][1:] / err[order][:-1],
    )


@dataclass
class ErrorReport:
    """Operator errors, either per time (``tau``) or per lambda (``lambdas``)."""

    errors: Dict[str, np.ndarray]
    frobenius: Dict[str, np.ndarray] = field(default_factory=dict)
    tau: Optional[np.ndarray] = None
    lambdas: Optional[np.ndarray] = None
    fits: Dict[str, ScalingFit] = field(default_factory=dict)
    window: Optional[int] = None
    leakage: Optional[float] = None
    notes: Dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {
            "window": self.window,
            "tau": None if self.tau is None else self.tau.tolist(),
            "lambdas": None if self.lambdas is None else self.lambdas.tolist(),
            "spectral": {k: v.tolist() for k, v in self.errors.items()},
            "frobenius": {k: v.tolist() for k, v in self.frobenius.items()},
            "fits": {k: v.as_dict() for k, v in self.fits.items()},
            "leakage": self.leakage,
        }
        out.update(self.notes)
        return out


FACTORIZATION_METRICS = ("factored", "mirror", "effective_only", "group", "linearized")


def factorization_error(
    config: RamanConfig,
    decomp: PerturbativeDecomposition,
    tau_grid: Iterable[float],
    window: Optional[int] = DEFAULT_WINDOW,
) -> ErrorReport:
    """Distances of ``T`` from ``T_e T_f``, ``T_f' T_e``, ``T_e`` and the
    group form, plus ``T_f`` from its linearisation, on ``tau_grid``."""
    tau = np.asarray(list(tau_grid), dtype=float)
    if tau.size == 0:
        raise ValueError("empty time grid")
    decomp.require_order(2)
    cols = window_columns(config.layout, window)
    exact = HermitianExponential(build_rotating_parts(config).total)
    spec = {k: np.empty(tau.size) for k in FACTORIZATION_METRICS}
    frob = {k: np.empty(tau.size) for k in FACTORIZATION_METRICS}
    for i, s in enumerate(tau):
        t = exact(s)
        te = effective_propagator(decomp, s)
        tf = fine_propagator(decomp, s)
        candidates = {
            "factored": (t, te @ tf),
            "mirror": (t, fine_propagator_prime(decomp, s) @ te),
            "effective_only": (t, te),
            "group": (t, second_order_group_propagator(decomp, s)),
            "linearized": (tf, linearized_fine_propagator(decomp, s)),
        }
        for name, (a, b) in candidates.items():
            spec[name][i] = operator_distance(a, b, cols)
            frob[name][i] = frobenius_distance(a, b, cols)
    return ErrorReport(errors=spec, frobenius=frob, tau=tau, window=window)


def fast_period_envelope(
    config: RamanConfig,
    decomp: PerturbativeDecomposition,
    tau_center: float,
    window: Optional[int] = DEFAULT_WINDOW,
    points: int = 41,
) -> float:
    """Max of ``|T - T_e|`` over one fast period ``2 pi`` centred at ``tau_center``.

    The bare coarse-grained error oscillates at the detuning; its value at a
    single time depends on the (lambda-dependent) phase of that oscillation,
    while the envelope measures its amplitude.
    """
    grid = np.linspace(tau_center - math.pi, tau_center + math.pi, points)
    grid = grid[grid >= 0.0]
    cols = window_columns(config.layout, window)
    exact = HermitianExponential(build_rotating_parts(config).total)
    return max(operator_distance(exact(s), effective_propagator(decomp, s), cols) for s in grid)


SCALING_METRICS = ("factored", "mirror", "group", "effective_only", "effective_envelope")


def lambda_scaling_study(
    base_config: RamanConfig,
    lambda_values: Sequence[float],
    tau_probe: float,
    window: Optional[int] = DEFAULT_WINDOW,
) -> ErrorReport:
    """Errors at ``tau_probe`` as lambda is swept by scaling ``nu, g13, g23``.

    Detuning and Lamb-Dicke parameters stay fixed, so ``kappa`` and
    ``kappa_j3`` do not change along the sweep.
    """
    lambdas = np.asarray(lambda_values, dtype=float)
    if lambdas.size < 3:
        raise ValueError("need >= 3 lambda values")
    if np.any(lambdas <= 0.0):
        raise ValueError("lambda values must be positive")
    if np.any(lambdas > PERTURBATIVE_MAX):
        warnings.warn(
            f"lambda values above {PERTURBATIVE_MAX} are outside the perturbative regime",
            stacklevel=2,
        )
    errors = {k: np.empty(lambdas.size) for k in SCALING_METRICS}
    for i, lam in enumerate(lambdas):
        cfg = base_config.with_lambda(float(lam))
        dec = decompose(cfg, 2)
        point = factorization_error(cfg, dec, [tau_probe], window)
        for name in ("factored", "mirror", "group", "effective_only"):
            errors[name][i] = point.errors[name][0]
        errors["effective_envelope"][i] = fast_period_envelope(cfg, dec, tau_probe, window)
    fits = {name: fit_power_law(lambdas, errors[name]) for name in SCALING_METRICS}
    return ErrorReport(
        errors=errors, lambdas=lambdas, fits=fits, window=window, notes={"tau_probe": float(tau_probe)}
    )


@dataclass
class TimeSeries:
    tau: np.ndarray
    channels: Dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)

    def population_defect(self) -> float:
        """Max ``|P1 + P2 + P3 - 1|`` over the grid."""
        total = self.channels["P1"] + self.channels["P2"] + self.channels["P3"]
        return float(np.abs(total - 1.0).max())


def resolve_initial_state(layout: SpaceLayout, initial: InitialState) -> np.ndarray:
    """Accept a state vector, ``(level, occupations)`` or ``{"level", "occupations"}``."""
    if isinstance(initial, dict):
        initial = (initial["level"], initial.get("occupations", [0] * layout.n_axes))
    if isinstance(initial, tuple):
        level, occ = initial
        return basis_state(layout, occ, int(level))
    psi = np.asarray(initial, dtype=complex).ravel()
    if psi.size != layout.dim:
        raise ValueError(f"state has {psi.size} entries, space has {layout.dim}")
    norm = np.linalg.norm(psi)
    if norm == 0.0:
        raise ValueError("initial state is the zero vector")
    if abs(norm - 1.0) > 1e-12:
        warnings.warn(f"initial state has norm {norm:.6g}; normalising", stacklevel=3)
        psi = psi / norm
    return psi


def _evolve_many(u: HermitianExponential, tau: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Columns ``exp(-iH tau_k) psi_k``; ``psi`` is a vector or a (dim, ntau) block."""
    ph = np.exp(-1j * np.outer(u.eigenvalues, tau))
    if u.eigenvectors is None:
        return ph * (psi[:, None] if psi.ndim == 1 else psi)
    v = u.eigenvectors
    coeff = dagger(v) @ psi
    coeff = ph * (coeff[:, None] if psi.ndim == 1 else coeff)
    return v @ coeff


def evolve_states(
    config: RamanConfig,
    decomp: Optional[PerturbativeDecomposition],
    psi0: np.ndarray,
    tau: np.ndarray,
    which: str,
) -> np.ndarray:
    """States ``U(tau_k) psi0`` as columns for the chosen propagator family."""
    if which == "exact":
        return _evolve_many(HermitianExponential(build_rotating_parts(config).total), tau, psi0)
    if decomp is None:
        raise ValueError(f"{which!r} evolution needs a decomposition")
    k = factor_kernel(decomp)
    if which == "effective":
        return _evolve_many(k.effective, tau, psi0)
    if which == "factored":
        # T_e T_f psi = T_e U0^dag exp(-iZ) U0 exp(iZ) psi
        phi = _evolve_many(k.first_order, tau, k.exp_plus_iz @ psi0)
        phi = _evolve_many(k.first_order, -tau, k.exp_minus_iz @ phi)
        return _evolve_many(k.effective, tau, phi)
    if which == "group":
        phi = _evolve_many(k.effective, tau, k.exp_plus_iz @ psi0)
        return k.exp_minus_iz @ phi
    raise ValueError(f"unknown propagator family {which!r}")


def level_populations(layout: SpaceLayout, states: np.ndarray) -> np.ndarray:
    """Array ``(3, ntau)`` of atomic-level populations."""
    prob = np.abs(states) ** 2
    levels = layout.levels()
    return np.stack([prob[levels == l].sum(axis=0) for l in (1, 2, 3)])


def population_timeseries(
    config: RamanConfig,
    decomp: Optional[PerturbativeDecomposition],
    initial: InitialState,
    tau_grid: Iterable[float],
    which: str = "exact",
) -> TimeSeries:
    tau = np.asarray(list(tau_grid), dtype=float)
    psi0 = resolve_initial_state(config.layout, initial)
    pops = level_populations(config.layout, evolve_states(config, decomp, psi0, tau, which))
    return TimeSeries(
        tau=tau,
        channels={"P1": pops[0], "P2": pops[1], "P3": pops[2]},
        metadata=_metadata(config, decomp, which=which),
    )


def _metadata(config: RamanConfig, decomp: Optional[PerturbativeDecomposition], **extra) -> dict:
    meta = {
        "cutoffs": list(config.layout.cutoffs),
        "lambda": validate_config(config).lam,
        "order": None if decomp is None else decomp.order,
        "config": config_fingerprint(config),
    }
    meta.update(extra)
    return meta


def config_fingerprint(config: RamanConfig) -> str:
    text = repr(
        (config.omega, config.nu, config.delta, config.g13, config.g23, config.eta13, config.eta23,
         config.layout.cutoffs)
    )
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def dominant_frequency(tau: np.ndarray, signal: np.ndarray, pad_factor: int = 8) -> float:
    """Angular frequency of the strongest non-DC line (Hann window, zero padding,
    parabolic peak interpolation). Requires a uniform grid."""
    tau = np.asarray(tau, dtype=float)
    if tau.size < 8:
        raise ValueError("need at least 8 samples for a frequency estimate")
    dt = np.diff(tau)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=1e-12):
        raise ValueError("frequency estimate needs a uniform grid")
    step = float(dt[0])
    x = (np.asarray(signal, dtype=float) - np.mean(signal)) * np.hanning(tau.size)
    n = int(2 ** math.ceil(math.log2(tau.size * pad_factor)))
    spectrum = np.abs(np.fft.rfft(x, n))
    freqs = np.fft.rfftfreq(n, step)
    # skip the DC lobe of the window
    start = max(1, int(math.ceil(2.0 * n / tau.size)))
    k = start + int(np.argmax(spectrum[start:]))
    if 0 < k < spectrum.size - 1:
        a, b, c = spectrum[k - 1], spectrum[k], spectrum[k + 1]
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
    else:
        shift = 0.0
    return float(2 * math.pi * (freqs[k] + shift * (freqs[1] - freqs[0])))


def coarse_vs_fine_report(
    config: RamanConfig,
    decomp: PerturbativeDecomposition,
    initial: InitialState,
    tau_grid: Iterable[float],
) -> TimeSeries:
    """Exact populations, effective and factored fidelities, and the frequency
    of the fast level-3 oscillation (in units of the detuning)."""
    tau = np.asarray(list(tau_grid), dtype=float)
    if tau.size > 1 and np.max(np.diff(tau)) >= math.pi / 2:
        raise ValueError("time grid too coarse to resolve the detuning (spacing must be < pi/2)")
    psi0 = resolve_initial_state(config.layout, initial)
    exact = evolve_states(config, decomp, psi0, tau, "exact")
    eff = evolve_states(config, decomp, psi0, tau, "effective")
    fac = evolve_states(config, decomp, psi0, tau, "factored")
    pops = level_populations(config.layout, exact)

    def fidelity(other):
        return np.abs(np.einsum("ij,ij->j", exact.conj(), other)) ** 2

    channels = {
        "P1": pops[0],
        "P2": pops[1],
        "P3": pops[2],
        "fid_eff": fidelity(eff),
        "fid_factored": fidelity(fac),
    }
    meta = _metadata(config, decomp)
    if tau.size >= 8 and np.ptp(pops[2]) > 0.0:
        # tau = delta * t, so this is already in units of the detuning
        meta["p3_peak_frequency"] = dominant_frequency(tau, pops[2])
    else:
        meta["p3_peak_frequency"] = None
    meta["p3_max"] = float(pops[2].max())
    return TimeSeries(tau=tau, channels=channels, metadata=meta)


def truncation_leakage(
    config: RamanConfig,
    tau_grid: Iterable[float],
    margin: int = 2,
    initial: Optional[InitialState] = None,
) -> float:
    """Max population in the top ``margin`` Fock states of any axis under exact
    evolution; above 1e-6 the cutoff is flagged as insufficient."""
    layout = config.layout
    if not 1 <= margin < min(layout.cutoffs):
        raise ValueError(f"margin must be in 1..{min(layout.cutoffs) - 1}")
    if initial is None:
        initial = (1, [0] * layout.n_axes)
    tau = np.asarray(list(tau_grid), dtype=float)
    psi0 = resolve_initial_state(layout, initial)
    states = evolve_states(config, None, psi0, tau, "exact")
    occ = layout.fock_occupations()
    edge = (occ >= np.asarray(layout.cutoffs) - margin).any(axis=1)
    leak = float((np.abs(states[edge]) ** 2).sum(axis=0).max()) if edge.any() else 0.0
    if leak > LEAKAGE_TOL:
        warnings.warn(
            f"truncation leakage {leak:.2e} exceeds {LEAKAGE_TOL:g}; raise the Fock cutoff",
            stacklevel=2,
        )
    return leak


def commutator_residual(decomp: PerturbativeDecomposition, tau: float) -> float:
    """Spectral norm of ``[lam Z1(tau), lam Z1]``, which the linearised fine
    propagator neglects."""
    z1t, _ = rotated_generators(decomp, tau)
    z1 = decomp.scaled_z[0]
    return float(np.linalg.norm(z1t @ z1 - z1 @ z1t, 2))
