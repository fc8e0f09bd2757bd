"""
Raman Lambda-scheme Hamiltonians in the lab frame, the rotating frame, and
after adiabatic dressing.

Everything is in angular-frequency units (hbar = 1). The rotating-frame
pieces ``H0``, ``HB`` and ``Hud`` are dimensionless (divided by the detuning),
so the rotating-frame generator is ``delta * (H0 + HB + Hud)`` and the natural
time variable is ``tau = delta * t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from types import SimpleNamespace
from typing import Callable, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .hilbert import (
    SpaceLayout,
    atomic_transfer_op,
    build_space_layout,
    dagger,
    plane_wave_op,
    total_number_op,
)

LAMBDA_WARN = 0.2


class ConfigError(ValueError):
    """Malformed physical configuration (shapes, non-finite values)."""


class ValidationError(ConfigError):
    """Configuration is well formed but physically unusable (zero detuning)."""


@dataclass(frozen=True)
class RamanConfig:
    """Physical parameters of the trapped three-level ion.

    Laser frequencies are not free inputs: both lasers share the detuning
    ``delta``, so ``omega13 = omega3 - omega1 - delta`` and
    ``omega23 = omega3 - omega2 - delta``.

    Parameters
    ----------
    omega : (float, float, float)
        Atomic level frequencies.
    nu : float
        Trap frequency (single, isotropic trap).
    delta : float
        Common one-photon detuning.
    g13, g23 : complex
        Laser couplings; the phase is the laser phase.
    eta13, eta23 : tuple of float
        Per-axis Lamb-Dicke projections of the two wave vectors.
    layout : SpaceLayout
    """

    omega: Tuple[float, float, float]
    nu: float
    delta: float
    g13: complex
    g23: complex
    eta13: Tuple[float, ...]
    eta23: Tuple[float, ...]
    layout: SpaceLayout

    def __post_init__(self):
        object.__setattr__(self, "omega", tuple(float(w) for w in self.omega))
        object.__setattr__(self, "eta13", tuple(float(e) for e in np.atleast_1d(self.eta13)))
        object.__setattr__(self, "eta23", tuple(float(e) for e in np.atleast_1d(self.eta23)))
        object.__setattr__(self, "g13", complex(self.g13))
        object.__setattr__(self, "g23", complex(self.g23))
        object.__setattr__(self, "nu", float(self.nu))
        object.__setattr__(self, "delta", float(self.delta))
        if len(self.omega) != 3:
            raise ConfigError(f"need three atomic frequencies, got {len(self.omega)}")
        n = self.layout.n_axes
        if len(self.eta13) != n or len(self.eta23) != n:
            raise ConfigError(
                f"Lamb-Dicke arrays must have one entry per axis ({n}), "
                f"got {len(self.eta13)} and {len(self.eta23)}"
            )
        scalars = [*self.omega, self.nu, self.delta, *self.eta13, *self.eta23]
        scalars += [self.g13.real, self.g13.imag, self.g23.real, self.g23.imag]
        if not all(math.isfinite(x) for x in scalars):
            raise ConfigError("all physical parameters must be finite")

    @property
    def omega13(self) -> float:
        return self.omega[2] - self.omega[0] - self.delta

    @property
    def omega23(self) -> float:
        return self.omega[2] - self.omega[1] - self.delta

    @property
    def coupling_scale(self) -> float:
        """``g = max(nu, |g13|, |g23|)``."""
        return max(abs(self.nu), abs(self.g13), abs(self.g23))

    @property
    def lam(self) -> float:
        """Perturbative parameter ``g / |delta|`` (infinite for zero detuning)."""
        if self.delta == 0.0:
            return math.inf
        return self.coupling_scale / abs(self.delta)

    def scaled(self, factor: float) -> "RamanConfig":
        """Scale ``nu``, ``g13`` and ``g23`` jointly (``lam`` scales by ``factor``)."""
        return replace(self, nu=self.nu * factor, g13=self.g13 * factor, g23=self.g23 * factor)

    def with_lambda(self, lam: float) -> "RamanConfig":
        if self.lam == 0.0 or not math.isfinite(self.lam):
            raise ConfigError("cannot rescale a configuration with lambda = 0")
        return self.scaled(lam / self.lam)

    def with_cutoffs(self, cutoffs: Sequence[int]) -> "RamanConfig":
        return replace(self, layout=build_space_layout(cutoffs))


def default_config(cutoff: int = 8) -> RamanConfig:
    """Single axis, ``delta = 1``, ``nu = g13 = g23 = 0.05``, ``eta = +/-0.1``."""
    return RamanConfig(
        omega=(0.0, 0.4, 3.0),
        nu=0.05,
        delta=1.0,
        g13=0.05,
        g23=0.05,
        eta13=(0.1,),
        eta23=(-0.1,),
        layout=build_space_layout([cutoff]),
    )


def lamb_dicke_projections(
    k_magnitude: float, theta: float, phi: float, x0: float, n_axes: int = 3
) -> Tuple[float, ...]:
    """Per-axis ``eta = k_alpha * x0`` for a wave vector at polar angles (theta, phi).

    Axes are taken in the order x, y, z; the first ``n_axes`` are returned.
    """
    direction = (
        math.sin(theta) * math.cos(phi),
        math.sin(theta) * math.sin(phi),
        math.cos(theta),
    )
    return tuple(k_magnitude * x0 * d for d in direction[:n_axes])


@dataclass
class ValidationReport:
    lam: float
    kappa: Optional[float]
    kappa13: Optional[complex]
    kappa23: Optional[complex]
    warnings: list = field(default_factory=list)

    @property
    def trivial(self) -> bool:
        return self.lam == 0.0

    def as_dict(self) -> dict:
        def cplx(z):
            return None if z is None else {"re": z.real, "im": z.imag}

        return {
            "lambda": self.lam,
            "kappa": self.kappa,
            "kappa13": cplx(self.kappa13),
            "kappa23": cplx(self.kappa23),
            "trivial": self.trivial,
            "warnings": list(self.warnings),
        }


def validate_config(config: RamanConfig) -> ValidationReport:
    """Report the perturbative parameters; zero detuning is fatal."""
    if config.delta == 0.0:
        raise ValidationError("detuning delta must be nonzero")
    g = config.coupling_scale
    lam = config.lam
    messages = []
    if g == 0.0:
        report = ValidationReport(lam=0.0, kappa=None, kappa13=None, kappa23=None)
        messages.append("trivial decomposition: all couplings and the trap frequency vanish")
    else:
        report = ValidationReport(
            lam=lam, kappa=config.nu / g, kappa13=config.g13 / g, kappa23=config.g23 / g
        )
    if lam >= LAMBDA_WARN:
        messages.append(
            f"lambda = {lam:.3g} >= {LAMBDA_WARN}: outside the far-detuned perturbative regime"
        )
    report.warnings = messages
    return report


def _require_detuning(config: RamanConfig) -> None:
    if config.delta == 0.0:
        raise ValidationError("detuning delta must be nonzero")


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@lru_cache(maxsize=64)
def operator_blocks(config: RamanConfig) -> SimpleNamespace:
    """Read-only building blocks shared by every Hamiltonian of ``config``."""
    layout = config.layout
    sigma = {(k, l): _readonly(atomic_transfer_op(layout, k, l)) for k in (1, 2, 3) for l in (1, 2, 3)}
    w13 = plane_wave_op(layout, config.eta13, +1)
    w23 = plane_wave_op(layout, config.eta23, +1)
    return SimpleNamespace(
        sigma=sigma,
        number=_readonly(total_number_op(layout)),
        w13=_readonly(w13),
        w23=_readonly(w23),
        # motional factor times atomic transfer, the coupling skeletons
        k13=_readonly(w13 @ sigma[1, 3]),
        k23=_readonly(w23 @ sigma[2, 3]),
        identity=_readonly(np.eye(layout.dim, dtype=complex)),
    )


def lab_hamiltonian_factory(config: RamanConfig) -> Callable[[float], np.ndarray]:
    """Return ``t -> H_lab(t)``; the static part is assembled once."""
    b = operator_blocks(config)
    w1, w2, w3 = config.omega
    static = w1 * b.sigma[1, 1] + w2 * b.sigma[2, 2] + w3 * b.sigma[3, 3] + config.nu * b.number
    c13 = config.g13 * b.k13
    c23 = config.g23 * b.k23
    om13, om23 = config.omega13, config.omega23

    def hamiltonian_at(t: float) -> np.ndarray:
        coupling = np.exp(1j * om13 * t) * c13 + np.exp(1j * om23 * t) * c23
        return static + coupling + dagger(coupling)

    return hamiltonian_at


def build_lab_hamiltonian(config: RamanConfig, t: float) -> np.ndarray:
    """Schrodinger-picture Hamiltonian (over hbar) at physical time ``t``."""
    return lab_hamiltonian_factory(config)(t)


def build_rotation_generator(config: RamanConfig) -> np.ndarray:
    """``A = w1 s11 + w2 s22 + (w3 - delta) s33``; the frame is ``R(t) = exp(-iAt)``."""
    b = operator_blocks(config)
    w1, w2, w3 = config.omega
    return w1 * b.sigma[1, 1] + w2 * b.sigma[2, 2] + (w3 - config.delta) * b.sigma[3, 3]


class RotatingParts(NamedTuple):
    h0: np.ndarray
    hb: np.ndarray
    hud: np.ndarray
    lam: float
    kappa: Optional[float]
    kappa13: Optional[complex]
    kappa23: Optional[complex]

    @property
    def total(self) -> np.ndarray:
        return self.h0 + self.hb + self.hud


def build_rotating_parts(config: RamanConfig) -> RotatingParts:
    """Dimensionless rotating-frame Hamiltonian split as ``H0 + HB + Hud``."""
    _require_detuning(config)
    report = validate_config(config)
    b = operator_blocks(config)
    d = config.delta
    h0 = b.sigma[3, 3].copy()
    hb = (config.nu / d) * b.number
    up = (config.g13 / d) * b.k13 + (config.g23 / d) * b.k23
    hud = up + dagger(up)
    return RotatingParts(h0, hb, hud, report.lam, report.kappa, report.kappa13, report.kappa23)


@dataclass(frozen=True)
class EffectiveParams:
    """Two-level Raman parameters obtained after eliminating level 3.

    ``g12`` follows the product formula ``g13 * conj(g23) / delta``. The
    coupling that actually multiplies ``W12 s12`` in the dressed Hamiltonian
    is ``-g12`` (see :attr:`dressed_coupling`).
    """

    omega12: float
    k12_eta: Tuple[float, ...]
    g12: complex
    stark1: float
    stark2: float
    stark3: float

    @property
    def dressed_coupling(self) -> complex:
        return -self.g12

    def as_dict(self) -> dict:
        return {
            "omega12": self.omega12,
            "k12_eta": list(self.k12_eta),
            "g12": {"re": self.g12.real, "im": self.g12.imag},
            "dressed_coupling": {"re": self.dressed_coupling.real, "im": self.dressed_coupling.imag},
            "stark1": self.stark1,
            "stark2": self.stark2,
            "stark3": self.stark3,
        }


def derive_effective_params(config: RamanConfig) -> EffectiveParams:
    _require_detuning(config)
    d = config.delta
    s1 = -abs(config.g13) ** 2 / d
    s2 = -abs(config.g23) ** 2 / d
    return EffectiveParams(
        omega12=config.omega[1] - config.omega[0],
        k12_eta=tuple(a - b for a, b in zip(config.eta13, config.eta23)),
        g12=config.g13 * config.g23.conjugate() / d,
        stark1=s1,
        stark2=s2,
        stark3=-(s1 + s2),
    )


def _raman_coupling(config: RamanConfig, params: EffectiveParams) -> np.ndarray:
    b = operator_blocks(config)
    w12 = plane_wave_op(config.layout, params.k12_eta, +1)
    return params.dressed_coupling * (w12 @ b.sigma[1, 2])


def build_dressed_blocks(config: RamanConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Decoupled dressed Hamiltonians ``(H12, H3)`` over hbar.

    ``H12`` lives on levels 1, 2 and ``H3`` on level 3; their sum is the
    second-order dressed generator ``delta * (H0 + lam C1 + lam^2 C2)``.
    """
    params = derive_effective_params(config)
    b = operator_blocks(config)
    ground = b.sigma[1, 1] + b.sigma[2, 2]
    coupling = _raman_coupling(config, params)
    h12 = (
        config.nu * b.number @ ground
        + params.stark1 * b.sigma[1, 1]
        + params.stark2 * b.sigma[2, 2]
        + coupling
        + dagger(coupling)
    )
    h3 = config.nu * b.number @ b.sigma[3, 3] + (config.delta + params.stark3) * b.sigma[3, 3]
    return h12, h3


def build_effective_lab_hamiltonians(config: RamanConfig, t: float) -> Tuple[np.ndarray, np.ndarray]:
    """Lab-frame effective Hamiltonians ``(He12(t), He3)``.

    ``R(t) @ T_e(delta * t)`` is the propagator of ``He12(t) + He3``.
    """
    params = derive_effective_params(config)
    b = operator_blocks(config)
    w1, w2, w3 = config.omega
    ground = b.sigma[1, 1] + b.sigma[2, 2]
    coupling = np.exp(1j * params.omega12 * t) * _raman_coupling(config, params)
    he12 = (
        config.nu * b.number @ ground
        + (w1 + params.stark1) * b.sigma[1, 1]
        + (w2 + params.stark2) * b.sigma[2, 2]
        + coupling
        + dagger(coupling)
    )
    he3 = config.nu * b.number @ b.sigma[3, 3] + (w3 + params.stark3) * b.sigma[3, 3]
    return he12, he3
