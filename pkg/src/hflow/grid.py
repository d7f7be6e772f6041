"""Uniform 1D grids and the discrete operator algebra built on them.

The discretization is linear finite elements on a uniform grid over [x_min, x_max]
with homogeneous Neumann boundary conditions and a lumped (trapezoidal) mass matrix:

    W = diag(w),   w_0 = w_N = h/2,   w_i = h otherwise,
    S = tridiagonal stiffness,  u^T S v = sum_cells (u_{i+1}-u_i)(v_{i+1}-v_i)/h.

Everything downstream is expressed through W and S:

    inner_h(u, v)   = u^T W v                      (discrete L^2)
    inner_v(u, v)   = u^T (W + S) v                (discrete H^1)
    apply_A(u)      = W^{-1} (S + W) u             (discrete -u'' + u, Neumann)
    riesz_inverse(g): solve (S + W) x = W g        (discrete (-d_xx + 1)^{-1})
    norm_dual(g)    = sqrt(g^T W x)                (discrete H^{-1}-type dual norm)

Two floating-point exactness properties are relied on by the solvers and are kept
deliberate in the assembly: S @ ones == 0 exactly (each row sums terms that cancel
without rounding), and w.sum() == x_max - x_min up to a single rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded
from scipy.sparse import csr_array, diags_array

Field = np.ndarray

#: Radicands of dual norms below this (absolute) trip a consistency error instead
#: of being clamped to zero.
_RADICAND_FLOOR = -1.0e-12


class NumericalConsistencyError(RuntimeError):
    """A quantity that is nonnegative in exact arithmetic came out clearly negative."""


@dataclass(frozen=True)
class Grid:
    """Uniform node set on [x_min, x_max] with n_cells cells (n_cells + 1 nodes)."""

    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self) -> None:
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)):
            raise ValueError("grid endpoints must be finite")
        if not self.x_max > self.x_min:
            raise ValueError(
                f"need x_max > x_min, got [{self.x_min}, {self.x_max}]"
            )
        if self.n_cells < 2:
            raise ValueError(f"need at least 2 cells, got {self.n_cells}")

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @cached_property
    def nodes(self) -> Field:
        x = np.linspace(self.x_min, self.x_max, self.n_nodes)
        x.flags.writeable = False
        return x

    @property
    def length(self) -> float:
        return self.x_max - self.x_min


@dataclass(frozen=True)
class DiscreteOperators:
    """Lumped mass weights, stiffness matrix, and cached solvers for one grid.

    Build with :func:`build_operators`. The (S + W) Cholesky factor is computed
    once and reused by every dual-norm evaluation and Riesz solve, which is what
    makes trajectory-long verification sweeps cheap.
    """

    grid: Grid
    weights: Field = field(repr=False)
    stiffness: csr_array = field(repr=False)
    # Banded forms of S + W: (2, N) upper banded for the Cholesky factor below,
    # plus the raw main/off diagonals used by the Newton assemblies.
    sw_main: Field = field(repr=False)
    sw_off: Field = field(repr=False)
    _sw_cholesky: Field = field(repr=False)

    # -- inner products and norms -------------------------------------------------

    def inner_h(self, u: Field, v: Field) -> float:
        """Lumped L^2 inner product u^T W v."""
        return float(np.dot(u * self.weights, v))

    def norm_h(self, u: Field) -> float:
        return float(np.sqrt(np.dot(u * self.weights, u)))

    def stiffness_product(self, u: Field, v: Field) -> float:
        """u^T S v computed by its exact cell decomposition sum (du)(dv)/h.

        The cell form makes sign statements exact: for v = m(u) with m
        nondecreasing every cell term is a product of equal-signed differences,
        so the sum is nonnegative without rounding surprises.
        """
        return float(np.dot(np.diff(u), np.diff(v)) / self.grid.h)

    def inner_v(self, u: Field, v: Field) -> float:
        """Discrete H^1 inner product u^T (W + S) v."""
        return self.inner_h(u, v) + self.stiffness_product(u, v)

    def norm_v(self, u: Field) -> float:
        return float(np.sqrt(self.inner_h(u, u) + self.stiffness_product(u, u)))

    # -- operator applications ----------------------------------------------------

    def apply_sw(self, u: Field) -> Field:
        """(S + W) u as an assembled (dual-side) vector."""
        return self.stiffness @ u + self.weights * u

    def apply_A(self, u: Field) -> Field:
        """Nodal action of the discrete Neumann operator -d_xx + 1: W^{-1}(S + W) u."""
        return self.apply_sw(u) / self.weights

    def riesz_inverse(self, g: Field) -> Field:
        """Solve (S + W) x = W g: the discrete (-d_xx + 1)^{-1} applied to g."""
        return cho_solve_banded((self._sw_cholesky, False), self.weights * g)

    def norm_dual(self, g: Field) -> float:
        """Dual norm |g|_{V*} = sqrt(g^T W (S+W)^{-1} W g).

        Satisfies |g|_{V*} <= |g|_H <= |g|_V for every nodal field g.
        """
        radicand = self.inner_h(self.riesz_inverse(g), g)
        if radicand < _RADICAND_FLOOR:
            raise NumericalConsistencyError(
                f"dual-norm radicand {radicand:.3e} is negative beyond roundoff"
            )
        return float(np.sqrt(max(radicand, 0.0)))

    def mean_weighted(self, u: Field) -> float:
        """Total lumped mass sum_i w_i u_i (the pairing of u with the constant 1)."""
        return float(np.dot(self.weights, u))


def build_operators(grid: Grid) -> DiscreteOperators:
    """Assemble weights, stiffness, and the cached (S + W) Cholesky factor."""
    n = grid.n_nodes
    h = grid.h
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    w.flags.writeable = False

    inv_h = 1.0 / h
    main = np.full(n, 2.0 * inv_h)
    main[0] = main[-1] = inv_h
    off = np.full(n - 1, -inv_h)
    stiffness = diags_array([off, main, off], offsets=[-1, 0, 1], format="csr")

    sw_main = main + w
    sw_off = off.copy()
    sw_main.flags.writeable = False
    sw_off.flags.writeable = False

    upper = np.zeros((2, n))
    upper[0, 1:] = sw_off
    upper[1, :] = sw_main
    factor = cholesky_banded(upper)

    return DiscreteOperators(
        grid=grid,
        weights=w,
        stiffness=stiffness,
        sw_main=sw_main,
        sw_off=sw_off,
        _sw_cholesky=factor,
    )
