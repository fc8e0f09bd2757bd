"""
Evolution operators for the Raman scheme.

Times here are dimensionless (``tau = delta * t``) unless a function takes a
physical ``t`` explicitly (the lab frame and the frame rotation).

Every generator is Hermitian, so exponentials go through one cached
eigendecomposition per generator: ``exp(-iH tau) = V exp(-iE tau) V^dag``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Tuple
from weakref import WeakKeyDictionary

import numpy as np

from .hamiltonian import RamanConfig, build_rotating_parts, build_rotation_generator
from .hilbert import dagger, hermiticity_defect
from .perturbation import PerturbativeDecomposition

HERMITIAN_RTOL = 1e-10
RK4_FLAG_DEFECT = 1e-4


class HermitianExponential:
    """``tau -> exp(-i H tau)`` for a fixed Hermitian ``H``.

    Diagonal input is exponentiated entrywise.

    Examples
    --------
    >>> import numpy as np
    >>> u = HermitianExponential(np.diag([0.0, 1.0]))
    >>> np.round(u(np.pi).real, 12)
    array([[ 1.,  0.],
           [ 0., -1.]])
    """

    def __init__(self, h: np.ndarray):
        h = np.asarray(h, dtype=complex)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError(f"generator must be square, got shape {h.shape}")
        if hermiticity_defect(h) > HERMITIAN_RTOL:
            raise ValueError("generator is not Hermitian")
        self.dim = h.shape[0]
        offdiag = h - np.diag(np.diag(h))
        if not offdiag.any():
            self.eigenvalues = np.diag(h).real.copy()
            self.eigenvectors = None
        else:
            self.eigenvalues, self.eigenvectors = np.linalg.eigh(0.5 * (h + dagger(h)))

    def phases(self, tau: float) -> np.ndarray:
        return np.exp(-1j * self.eigenvalues * tau)

    def __call__(self, tau: float) -> np.ndarray:
        ph = self.phases(tau)
        if self.eigenvectors is None:
            return np.diag(ph)
        v = self.eigenvectors
        return (v * ph) @ dagger(v)

    def apply(self, tau: float, psi: np.ndarray) -> np.ndarray:
        """``exp(-iH tau) @ psi`` without forming the matrix."""
        ph = self.phases(tau)
        if self.eigenvectors is None:
            return ph[:, None] * psi if psi.ndim == 2 else ph * psi
        v = self.eigenvectors
        coeff = dagger(v) @ psi
        coeff = ph[:, None] * coeff if psi.ndim == 2 else ph * coeff
        return v @ coeff

    def conjugate(self, tau: float, op: np.ndarray) -> np.ndarray:
        """``exp(+iH tau) op exp(-iH tau)``."""
        u = self(tau)
        return dagger(u) @ op @ u


def expm_unitary(h: np.ndarray, tau: float) -> np.ndarray:
    """``exp(-i h tau)`` for Hermitian ``h``."""
    return HermitianExponential(h)(tau)


def rotation_frame_op(config: RamanConfig, t: float) -> np.ndarray:
    """``R(t) = exp(-iAt)``; ``A`` is diagonal."""
    a = np.diag(build_rotation_generator(config)).real
    return np.diag(np.exp(-1j * a * t))


def _rotating_exponential(config: RamanConfig) -> HermitianExponential:
    return HermitianExponential(build_rotating_parts(config).total)


def exact_rotating_propagator(config: RamanConfig, tau: float) -> np.ndarray:
    """``T(tau) = exp(-i (H0 + HB + Hud) tau)``."""
    return _rotating_exponential(config)(tau)


def lab_propagator(config: RamanConfig, t: float) -> np.ndarray:
    """``T_lab(t) = R(t) T(delta * t)`` at physical time ``t``."""
    return rotation_frame_op(config, t) @ exact_rotating_propagator(config, config.delta * t)


@dataclass
class _FactorKernel:
    effective: HermitianExponential
    first_order: HermitianExponential
    z_total: np.ndarray
    exp_plus_iz: np.ndarray
    exp_minus_iz: np.ndarray


_KERNELS: "WeakKeyDictionary[PerturbativeDecomposition, _FactorKernel]" = WeakKeyDictionary()


def factor_kernel(decomp: PerturbativeDecomposition) -> _FactorKernel:
    """Eigendecompositions shared by every propagator built from ``decomp``."""
    decomp.require_order(2)
    kernel = _KERNELS.get(decomp)
    if kernel is None:
        z = decomp.z_sum(2)
        ez = HermitianExponential(z)
        kernel = _FactorKernel(
            effective=HermitianExponential(decomp.h0 + decomp.c_sum(2)),
            first_order=HermitianExponential(decomp.first_order_generator),
            z_total=z,
            exp_plus_iz=ez(-1.0),
            exp_minus_iz=ez(1.0),
        )
        _KERNELS[decomp] = kernel
    return kernel


def effective_propagator(decomp: PerturbativeDecomposition, tau: float) -> np.ndarray:
    """Coarse-grained ``T_e(tau) = exp(-i (H0 + lam C1 + lam^2 C2) tau)``."""
    return factor_kernel(decomp).effective(tau)


def rotated_generators(decomp: PerturbativeDecomposition, tau: float) -> Tuple[np.ndarray, np.ndarray]:
    """``lam Z1`` and ``lam^2 Z2`` in the interaction picture of ``H0 + lam C1``."""
    u = factor_kernel(decomp).first_order(tau)
    ud = dagger(u)
    return ud @ decomp.scaled_z[0] @ u, ud @ decomp.scaled_z[1] @ u


def fine_propagator(decomp: PerturbativeDecomposition, tau: float) -> np.ndarray:
    """``T_f(tau) = exp(-i Z(tau)) exp(i Z)`` with ``Z = lam Z1 + lam^2 Z2``.

    ``exp(-i Z(tau)) = U0^dag exp(-iZ) U0`` where ``U0 = exp(-i(H0 + lam C1) tau)``,
    so both exponentials are exact and no per-time expm is needed.
    """
    k = factor_kernel(decomp)
    u0 = k.first_order(tau)
    return dagger(u0) @ k.exp_minus_iz @ u0 @ k.exp_plus_iz


def fine_propagator_prime(decomp: PerturbativeDecomposition, tau: float) -> np.ndarray:
    """``T_f'(tau) = T_f(-tau)^dag``, the left-hand fine factor."""
    return dagger(fine_propagator(decomp, -tau))


def linearized_fine_propagator(decomp: PerturbativeDecomposition, tau: float) -> np.ndarray:
    z1t, z2t = rotated_generators(decomp, tau)
    d1 = z1t - decomp.scaled_z[0]
    d2 = z2t - decomp.scaled_z[1]
    return np.eye(d1.shape[0]) - 1j * d1 - 1j * d2 - 0.5 * (d1 @ d1)


def second_order_group_propagator(decomp: PerturbativeDecomposition, tau: float) -> np.ndarray:
    """``exp(-iZ) T_e(tau) exp(iZ)``, a one-parameter unitary group."""
    k = factor_kernel(decomp)
    return k.exp_minus_iz @ k.effective(tau) @ k.exp_plus_iz


@dataclass
class RK4Result:
    propagator: np.ndarray
    steps: int
    unitarity_defect: float
    error_estimate: Optional[float] = None

    @property
    def flagged(self) -> bool:
        return self.unitarity_defect > RK4_FLAG_DEFECT


def _rk4(hamiltonian_at: Callable[[float], np.ndarray], t_final: float, steps: int) -> np.ndarray:
    h = t_final / steps
    h0 = hamiltonian_at(0.0)
    u = np.eye(h0.shape[0], dtype=complex)
    for i in range(steps):
        t = i * h
        ha = hamiltonian_at(t) if i else h0
        hm = hamiltonian_at(t + 0.5 * h)
        hb = hamiltonian_at(t + h)
        k1 = -1j * (ha @ u)
        k2 = -1j * (hm @ (u + 0.5 * h * k1))
        k3 = -1j * (hm @ (u + 0.5 * h * k2))
        k4 = -1j * (hb @ (u + h * k3))
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return u


def reference_time_ordered_propagator(
    hamiltonian_at: Callable[[float], np.ndarray], t_final: float, steps: int
) -> RK4Result:
    """Fixed-step classic RK4 for ``dU/dt = -i H(t) U``, ``U(0) = 1``.

    Independent of every eigendecomposition in this module; used as the oracle
    for the time-dependent lab-frame problem.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    u = _rk4(hamiltonian_at, t_final, steps)
    defect = float(np.linalg.norm(dagger(u) @ u - np.eye(u.shape[0]), 2))
    result = RK4Result(propagator=u, steps=steps, unitarity_defect=defect)
    if result.flagged:
        warnings.warn(
            f"RK4 unitarity defect {defect:.2e} with {steps} steps; increase the step count",
            stacklevel=2,
        )
    return result


def richardson_propagator(
    hamiltonian_at: Callable[[float], np.ndarray], t_final: float, steps: int
) -> RK4Result:
    """RK4 at ``2*steps`` with the error estimate ``|U_2n - U_n| / 15``."""
    coarse = reference_time_ordered_propagator(hamiltonian_at, t_final, steps)
    fine = reference_time_ordered_propagator(hamiltonian_at, t_final, 2 * steps)
    fine.error_estimate = float(np.linalg.norm(fine.propagator - coarse.propagator, 2) / 15.0)
    return fine


def converged_reference_propagator(
    hamiltonian_at: Callable[[float], np.ndarray],
    t_final: float,
    tol: float = 1e-8,
    start_steps: int = 256,
    max_steps: int = 1 << 17,
) -> RK4Result:
    """Double the RK4 step count until the Richardson estimate is below ``tol``."""
    steps = start_steps
    coarse = reference_time_ordered_propagator(hamiltonian_at, t_final, steps)
    while True:
        fine = reference_time_ordered_propagator(hamiltonian_at, t_final, 2 * steps)
        estimate = float(np.linalg.norm(fine.propagator - coarse.propagator, 2) / 15.0)
        fine.error_estimate = estimate
        if estimate <= tol or 2 * steps >= max_steps:
            return fine
        coarse, steps = fine, 2 * steps


def unitarity_defect(u: np.ndarray) -> float:
    return float(np.linalg.norm(dagger(u) @ u - np.eye(u.shape[0]), 2))
