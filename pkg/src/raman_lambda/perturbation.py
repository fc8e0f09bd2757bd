"""
Canonical block-diagonalisation ``exp(iZ) H exp(-iZ) = H0 + C`` order by order.

``H = H0 + Hp`` with ``Hp`` first order. At order ``n`` the transformed
Hamiltonian contains ``i[Z_n, H0] + F_n`` where ``F_n`` only involves
``Hp`` and lower-order ``Z``. The block-diagonal part of ``F_n`` is ``C_n``;
the off-diagonal part is cancelled by ``Z_n``, which is chosen with vanishing
diagonal blocks (the minimal solution).

All generators are stored already multiplied by their power of lambda.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import List, Sequence, Tuple

import numpy as np

from .hamiltonian import RamanConfig, build_rotating_parts, operator_blocks
from .hilbert import SpaceLayout, atomic_transfer_op, dagger, hermiticity_defect, op_commutator

MAX_ORDER = 6


class DecompositionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BlockStructure:
    """Spectral projectors of ``H0`` with their eigenvalues.

    For the Raman problem these are ``P_g`` (levels 1, 2; eigenvalue 0) and
    ``P_e`` (level 3; eigenvalue 1), but the solver only relies on the
    projectors summing to the identity.
    """

    projectors: Tuple[np.ndarray, ...]
    eigenvalues: Tuple[float, ...]

    @property
    def projector_g(self) -> np.ndarray:
        return self.projectors[0]

    @property
    def projector_e(self) -> np.ndarray:
        return self.projectors[1]

    @property
    def eigenvalue_g(self) -> float:
        return self.eigenvalues[0]

    @property
    def eigenvalue_e(self) -> float:
        return self.eigenvalues[1]

    def diagonal_part(self, f: np.ndarray) -> np.ndarray:
        return sum(p @ f @ p for p in self.projectors)

    def offdiagonal_part(self, f: np.ndarray) -> np.ndarray:
        return f - self.diagonal_part(f)

    def operator(self) -> np.ndarray:
        """``sum_m E_m P_m``."""
        return sum(e * p for e, p in zip(self.eigenvalues, self.projectors))


def build_block_structure(layout: SpaceLayout) -> BlockStructure:
    p_e = atomic_transfer_op(layout, 3, 3)
    p_g = atomic_transfer_op(layout, 1, 1) + atomic_transfer_op(layout, 2, 2)
    return BlockStructure(projectors=(p_g, p_e), eigenvalues=(0.0, 1.0))


def block_offdiag_solve(f: np.ndarray, block: BlockStructure) -> np.ndarray:
    """Minimal ``Z`` cancelling the off-diagonal blocks of ``f``.

    Blockwise ``Z_jk = i P_j f P_k / (E_k - E_j)`` for ``j != k`` and zero on
    the diagonal, so that ``i[Z, H0] = -(f - sum_m P_m f P_m)``. For the
    two-block Raman problem this is ``Z = i P_g f P_e - i P_e f P_g``.
    """
    z = np.zeros_like(f, dtype=complex)
    for j, (pj, ej) in enumerate(zip(block.projectors, block.eigenvalues)):
        for k, (pk, ek) in enumerate(zip(block.projectors, block.eigenvalues)):
            if j != k:
                z += (1j / (ek - ej)) * (pj @ f @ pk)
    return z


@dataclass(frozen=True, eq=False)
class PerturbativeDecomposition:
    """``scaled_c[n-1] = lam^n C_n`` and ``scaled_z[n-1] = lam^n Z_n``."""

    order: int
    scaled_c: Tuple[np.ndarray, ...]
    scaled_z: Tuple[np.ndarray, ...]
    block: BlockStructure
    h0: np.ndarray

    def c_sum(self, upto: int | None = None) -> np.ndarray:
        upto = self.order if upto is None else upto
        return sum(self.scaled_c[:upto], np.zeros_like(self.h0))

    def z_sum(self, upto: int | None = None) -> np.ndarray:
        upto = self.order if upto is None else upto
        return sum(self.scaled_z[:upto], np.zeros_like(self.h0))

    @cached_property
    def effective_generator(self) -> np.ndarray:
        """``H0 + lam C1 + lam^2 C2`` (all computed orders)."""
        return self.h0 + self.c_sum()

    @cached_property
    def first_order_generator(self) -> np.ndarray:
        """``H0 + lam C1``, which rotates the fine generators."""
        return self.h0 + self.scaled_c[0]

    def require_order(self, n: int) -> None:
        if self.order < n:
            raise DecompositionError(f"need a decomposition of order >= {n}, have {self.order}")


def _check_two_level_spectrum(h0: np.ndarray, block: BlockStructure) -> None:
    if h0.shape != block.projector_g.shape:
        raise DecompositionError("H0 and block structure act on different spaces")
    residual = np.abs(h0 - block.operator()).max()
    if residual > 1e-12:
        raise DecompositionError("H0 is not sum_m E_m P_m for the given block structure")


def solve_decomposition(
    h0: np.ndarray, hp: np.ndarray, block: BlockStructure, order: int
) -> PerturbativeDecomposition:
    """Solve for ``lam^n C_n`` and ``lam^n Z_n``, ``n = 1..order``.

    ``terms[k][n]`` holds the order-``n`` part of ``ad_Z^k H``; the adjoint
    series ``sum_k i^k / k! ad_Z^k H`` is rebuilt at every order with the new
    ``Z_n`` still zero, which gives ``F_n`` directly.
    """
    if order < 1:
        raise DecompositionError("order must be >= 1")
    if order > MAX_ORDER:
        raise DecompositionError(f"order must be <= {MAX_ORDER}")
    _check_two_level_spectrum(h0, block)
    if hermiticity_defect(hp) > 1e-12:
        raise DecompositionError("perturbation is not Hermitian")

    zero = np.zeros_like(h0, dtype=complex)
    zs: List[np.ndarray] = [zero] * (order + 1)
    cs: List[np.ndarray] = []
    for n in range(1, order + 1):
        # terms[k][m], m = 0..n; only Z_1..Z_{n-1} are nonzero at this point
        terms = [[h0, hp] + [zero] * (n - 1)]
        for k in range(1, n + 1):
            prev = terms[-1]
            row = [zero] * (n + 1)
            for m in range(k, n + 1):
                acc = zero
                for j in range(1, m - (k - 1) + 1):
                    if j < n and prev[m - j] is not zero:
                        acc = acc + op_commutator(zs[j], prev[m - j])
                row[m] = acc
            terms.append(row)
        f_n = sum((1j**k / math.factorial(k)) * terms[k][n] for k in range(len(terms)))
        c_n = block.diagonal_part(f_n)
        z_n = block_offdiag_solve(f_n, block)
        # clean roundoff so the scaled operators are exactly Hermitian
        cs.append(0.5 * (c_n + dagger(c_n)))
        zs[n] = 0.5 * (z_n + dagger(z_n))
    return PerturbativeDecomposition(
        order=order, scaled_c=tuple(cs), scaled_z=tuple(zs[1:]), block=block, h0=h0
    )


def decompose(config: RamanConfig, order: int = 2) -> PerturbativeDecomposition:
    """Recursive decomposition of the rotating-frame Hamiltonian of ``config``."""
    parts = build_rotating_parts(config)
    block = build_block_structure(config.layout)
    return solve_decomposition(parts.h0, parts.hb + parts.hud, block, order)


def closed_form_first_order(config: RamanConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Explicit ``(lam C1, lam Z1)``: ``lam C1 = HB`` and
    ``lam Z1 = i(g13/D W13 s13 - h.c.) + i(g23/D W23 s23 - h.c.)``."""
    parts = build_rotating_parts(config)
    b = operator_blocks(config)
    d = config.delta
    up = (config.g13 / d) * b.k13 + (config.g23 / d) * b.k23
    return parts.hb, 1j * (up - dagger(up))


def x_operators(config: RamanConfig) -> Tuple[np.ndarray, np.ndarray]:
    """``X_j3 = i[W_j3, N]`` for ``j = 1, 2`` (``X_3j`` is the adjoint)."""
    b = operator_blocks(config)
    return 1j * op_commutator(b.w13, b.number), 1j * op_commutator(b.w23, b.number)


def closed_form_second_order(config: RamanConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Explicit ``(lam^2 C2, lam^2 Z2)`` for the Raman problem.

    ``lam^2 Z2 = -(nu/D) sum_j (g_j3/D X_j3 s_j3 + h.c.)``: the overall minus
    sign is the one required by the second-order condition
    ``i[Z2, H0] = -offdiag(i[Z1, Hp])``.
    """
    if config.delta == 0.0:
        build_rotating_parts(config)  # raises the detuning error
    b = operator_blocks(config)
    d = config.delta
    s = b.sigma
    a13, a23 = abs(config.g13) ** 2 / d**2, abs(config.g23) ** 2 / d**2
    cross = (config.g13 * config.g23.conjugate() / d**2) * (b.w13 @ dagger(b.w23) @ s[1, 2])
    c2 = -a13 * s[1, 1] - a23 * s[2, 2] + (a13 + a23) * s[3, 3] - (cross + dagger(cross))

    x13, x23 = x_operators(config)
    half = (config.g13 / d) * x13 @ s[1, 3] + (config.g23 / d) * x23 @ s[2, 3]
    z2 = -(config.nu / d) * (half + dagger(half))
    return c2, z2


def minimal_solution_residual(z: np.ndarray, block: BlockStructure) -> float:
    return float(max(np.abs(p @ z @ p).max() for p in block.projectors))


def constant_of_motion_residual(c: np.ndarray, h0: np.ndarray) -> float:
    return float(np.abs(op_commutator(h0, c)).max())


def dressing_residual(h: np.ndarray, decomp: PerturbativeDecomposition) -> float:
    """Spectral norm of the off-diagonal blocks of ``exp(iZ) H exp(-iZ)``.

    Vanishes to order ``lam^(order+1)``; an independent check of the signs of
    every ``Z_n``.
    """
    evals, evecs = np.linalg.eigh(decomp.z_sum())
    u = (evecs * np.exp(1j * evals)) @ dagger(evecs)
    k = u @ h @ dagger(u)
    return float(np.linalg.norm(decomp.block.offdiagonal_part(k), 2))


def recursion_vs_closed_form(config: RamanConfig, decomp: PerturbativeDecomposition) -> float:
    """Max entrywise deviation between the recursion and the explicit formulas."""
    c1, z1 = closed_form_first_order(config)
    pairs: List[Tuple[np.ndarray, np.ndarray]] = [(decomp.scaled_c[0], c1), (decomp.scaled_z[0], z1)]
    if decomp.order >= 2:
        c2, z2 = closed_form_second_order(config)
        pairs += [(decomp.scaled_c[1], c2), (decomp.scaled_z[1], z2)]
    return float(max(np.abs(a - b).max() for a, b in pairs))


def operator_norms(mats: Sequence[np.ndarray]) -> List[float]:
    return [float(np.linalg.norm(m, 2)) for m in mats]
