"""
Truncated composite Hilbert space of a three-level ion in a harmonic trap.

The space is ``C^3 (atom) x F_0 x F_1 x ...`` with one truncated Fock factor
per motional axis. Basis ordering is atomic-fastest: the flat index of
``|level; n_0, n_1, ...>`` is ``(level - 1) + 3 * m`` where ``m`` is the
row-major (first axis slowest) flattening of the occupations. In matrix terms
every operator is ``kron(F_0, F_1, ..., atom)``.

Operators are plain dense ``complex128`` numpy arrays.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

N_LEVELS = 3
DEFAULT_DIM_CAP = 20_000
DIM_CAP_ENV = "RAMAN_DIM_CAP"


class LayoutError(ValueError):
    """Invalid space layout or out-of-range basis label."""


def _dim_cap() -> int:
    raw = os.environ.get(DIM_CAP_ENV)
    if raw is None:
        return DEFAULT_DIM_CAP
    try:
        cap = int(raw)
    except ValueError:
        raise LayoutError(f"{DIM_CAP_ENV}={raw!r} is not an integer") from None
    if cap < N_LEVELS * 2:
        raise LayoutError(f"{DIM_CAP_ENV}={cap} is below the smallest possible space")
    return cap


@dataclass(frozen=True)
class SpaceLayout:
    """Three atomic levels times one truncated Fock space per axis.

    Parameters
    ----------
    cutoffs : tuple of int
        Number of retained Fock states per axis (occupations ``0..cutoff-1``).
    """

    cutoffs: Tuple[int, ...]

    atomic_levels = N_LEVELS
    basis_order = "atomic-fastest, then axis occupations with the first axis slowest"

    @property
    def n_axes(self) -> int:
        return len(self.cutoffs)

    @property
    def motional_dim(self) -> int:
        return int(np.prod(self.cutoffs))

    @property
    def dim(self) -> int:
        return N_LEVELS * self.motional_dim

    def index(self, occupations: Sequence[int], level: int) -> int:
        return basis_index(self, occupations, level)

    def decode(self, index: int) -> Tuple[Tuple[int, ...], int]:
        """Inverse of :func:`basis_index`: ``index -> (occupations, level)``."""
        if not 0 <= index < self.dim:
            raise LayoutError(f"index {index} outside 0..{self.dim - 1}")
        motional, atomic = divmod(int(index), N_LEVELS)
        occ = np.unravel_index(motional, self.cutoffs)
        return tuple(int(n) for n in occ), atomic + 1

    def fock_occupations(self) -> np.ndarray:
        """Array of shape ``(dim, n_axes)`` with the occupation of each basis vector."""
        grids = np.indices(self.cutoffs).reshape(self.n_axes, -1).T
        return np.repeat(grids, N_LEVELS, axis=0)

    def levels(self) -> np.ndarray:
        """Atomic level (1..3) of each basis vector."""
        return np.tile(np.arange(1, N_LEVELS + 1), self.motional_dim)


def build_space_layout(axes_cutoffs: Sequence[int], dim_cap: int | None = None) -> SpaceLayout:
    """Validate per-axis cutoffs and return the composite layout.

    The dimension cap defaults to 20 000 and can be overridden with the
    ``RAMAN_DIM_CAP`` environment variable or the ``dim_cap`` argument.
    """
    cutoffs = tuple(int(c) for c in axes_cutoffs)
    if len(cutoffs) == 0:
        raise LayoutError("need at least one axis")
    if len(cutoffs) > 3:
        raise LayoutError(f"at most 3 motional axes are supported, got {len(cutoffs)}")
    for axis, c in enumerate(cutoffs):
        if c < 2:
            raise LayoutError(f"axis {axis}: fock cutoff must be >= 2, got {c}")
    layout = SpaceLayout(cutoffs)
    cap = _dim_cap() if dim_cap is None else int(dim_cap)
    if layout.dim > cap:
        raise LayoutError(
            f"total dimension {layout.dim} exceeds the safety cap {cap} "
            f"(set {DIM_CAP_ENV} to override)"
        )
    return layout


def basis_index(layout: SpaceLayout, occupations: Sequence[int], level: int) -> int:
    occupations = tuple(int(n) for n in np.atleast_1d(occupations))
    if len(occupations) != layout.n_axes:
        raise LayoutError(f"expected {layout.n_axes} occupations, got {len(occupations)}")
    for axis, (n, c) in enumerate(zip(occupations, layout.cutoffs)):
        if not 0 <= n < c:
            raise LayoutError(f"axis {axis}: occupation {n} outside 0..{c - 1}")
    if level not in (1, 2, 3):
        raise LayoutError(f"atomic level must be 1, 2 or 3, got {level}")
    motional = int(np.ravel_multi_index(occupations, layout.cutoffs))
    return (level - 1) + N_LEVELS * motional


def basis_state(layout: SpaceLayout, occupations: Sequence[int], level: int) -> np.ndarray:
    psi = np.zeros(layout.dim, dtype=complex)
    psi[basis_index(layout, occupations, level)] = 1.0
    return psi


def _check_axis(layout: SpaceLayout, axis: int) -> None:
    if not 0 <= axis < layout.n_axes:
        raise LayoutError(f"axis {axis} outside 0..{layout.n_axes - 1}")


def ladder_matrix(cutoff: int) -> np.ndarray:
    """Truncated single-mode annihilation operator, ``a[n-1, n] = sqrt(n)``."""
    return np.diag(np.sqrt(np.arange(1, cutoff, dtype=float)), k=1).astype(complex)


def embed_motional(layout: SpaceLayout, factors: dict) -> np.ndarray:
    """Kronecker product with ``factors[axis]`` on the given axes, identity elsewhere."""
    out = np.ones((1, 1), dtype=complex)
    for axis, c in enumerate(layout.cutoffs):
        out = np.kron(out, factors.get(axis, np.eye(c)))
    return np.kron(out, np.eye(N_LEVELS))


def annihilation_op(layout: SpaceLayout, axis: int) -> np.ndarray:
    _check_axis(layout, axis)
    return embed_motional(layout, {axis: ladder_matrix(layout.cutoffs[axis])})


def number_op(layout: SpaceLayout, axis: int) -> np.ndarray:
    _check_axis(layout, axis)
    a = annihilation_op(layout, axis)
    return a.conj().T @ a


def total_number_op(layout: SpaceLayout) -> np.ndarray:
    """Sum of the number operators of all axes (diagonal)."""
    return np.diag(layout.fock_occupations().sum(axis=1).astype(complex))


def atomic_transfer_op(layout: SpaceLayout, k: int, l: int) -> np.ndarray:
    """``|k><l|`` on the atom, identity on every motional factor."""
    if k not in (1, 2, 3) or l not in (1, 2, 3):
        raise LayoutError(f"atomic indices must be in 1..3, got ({k}, {l})")
    sigma = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
    sigma[k - 1, l - 1] = 1.0
    return np.kron(np.eye(layout.motional_dim), sigma)


def _axis_plane_wave(cutoff: int, phase: float) -> np.ndarray:
    # exp(-i * phase * (a + a^dag)) of the truncated (real symmetric) quadrature
    x = ladder_matrix(cutoff).real
    x = x + x.T
    evals, evecs = np.linalg.eigh(x)
    return (evecs * np.exp(-1j * phase * evals)) @ evecs.T


def plane_wave_op(layout: SpaceLayout, lamb_dicke: Sequence[float], sign: int = 1) -> np.ndarray:
    """Truncated plane-wave factor ``exp(-i sign sum_a eta_a (a_a + a_a^dag))``.

    The exponential is taken of the truncated generator, so the result is
    unitary on the truncated space. Axes commute, so the result is the
    Kronecker product of per-axis exponentials.
    """
    etas = np.asarray(lamb_dicke, dtype=float).ravel()
    if etas.size != layout.n_axes:
        raise LayoutError(f"expected {layout.n_axes} Lamb-Dicke parameters, got {etas.size}")
    if not np.all(np.isfinite(etas)):
        raise LayoutError("Lamb-Dicke parameters must be finite")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    factors = {
        axis: _axis_plane_wave(c, sign * eta)
        for axis, (c, eta) in enumerate(zip(layout.cutoffs, etas))
        if eta != 0.0
    }
    return embed_motional(layout, factors)


def op_commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise LayoutError(f"commutator of mismatched operators {a.shape} and {b.shape}")
    return a @ b - b @ a


def dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def hermiticity_defect(a: np.ndarray) -> float:
    """``max|A - A^dag|`` relative to ``max|A|`` (0 for the zero matrix)."""
    scale = np.abs(a).max(initial=0.0)
    if scale == 0.0:
        return 0.0
    return float(np.abs(a - a.conj().T).max() / scale)


def is_hermitian(a: np.ndarray, rtol: float = 1e-12) -> bool:
    return hermiticity_defect(a) <= rtol
