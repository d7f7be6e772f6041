"""Problem specifications, derived constants, and data for the two evolution problems.

The unregularized problem (eps = 0) is the porous-medium / fast-diffusion equation

    u_t + (-d_xx + 1) beta(u) = g,     Neumann BCs,

and the regularized problem (eps > 0) is its viscous Cahn-Hilliard-type relaxation

    u_t + (-d_xx + 1) mu = 0,
    mu = eps*(-d_xx + 1) u + beta(u) + pi_eps(u) - f,

where f solves (-d_xx + 1) f = g, so both problems share the same forcing data.
Both are the backward-Euler (equivalently proximal-point) discretization of a
gradient flow for the dual inner product implemented by
:meth:`hflow.grid.DiscreteOperators.norm_dual`.

This module owns: the ``ModelSpec`` run descriptor, normalization of initial/source
data, the resolvent initialization u0_eps = (I + eps*(-d_xx+1))^{-1} u0, the derived
a-priori constants (M1, M2, c1..c3), a small library of initial/source profiles, and
sympy-generated manufactured solutions for convergence studies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
import sympy as sp
from scipy.linalg import cho_solve_banded, cholesky_banded

from .grid import DiscreteOperators, Field, Grid
from .nonlinearity import PowerLawBeta

#: Source data: absent, a fixed nodal field, or a callable (x_nodes, t) -> nodal field.
SourceLike = Union[None, np.ndarray, Callable[[np.ndarray, float], np.ndarray]]
#: Initial data: a fixed nodal field, a scalar, or a callable x_nodes -> nodal field.
ProfileLike = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray]]

#: |round(T/tau)*tau - T| above this (relative) rejects the time grid.
_STEP_COUNT_RTOL = 1.0e-8


@dataclass(frozen=True)
class ModelSpec:
    """Everything needed to run one initial-value problem.

    ``eps == 0`` selects the unregularized problem; ``0 < eps < 1`` the regularized
    one (the upper bound keeps the Lipschitz constant of pi_eps below the
    coercivity modulus 2*c1 = 1 of beta's potential).

    ``u0`` is used verbatim by the integrator. Pipelines that want the resolvent
    initialization apply :func:`resolvent_initialize` themselves; keeping the
    choice explicit is what lets a stationary state be handed to the regularized
    problem unchanged.
    """

    beta: PowerLawBeta
    grid: Grid
    T: float
    tau: float
    u0: ProfileLike
    g: SourceLike = None
    eps: float = 0.0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.tau) and self.tau > 0.0):
            raise ValueError(f"time step tau must be positive, got {self.tau}")
        if not (np.isfinite(self.T) and self.T >= self.tau):
            raise ValueError(f"horizon T must satisfy T >= tau, got T={self.T}")
        if not (0.0 <= self.eps < 1.0):
            raise ValueError(f"regularization eps must lie in [0, 1), got {self.eps}")
        m = round(self.T / self.tau)
        if m < 1 or abs(m * self.tau - self.T) > _STEP_COUNT_RTOL * max(1.0, self.T):
            raise ValueError(
                f"T/tau = {self.T / self.tau!r} is not an integer step count"
            )
        if isinstance(self.u0, np.ndarray) and self.u0.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"u0 array has shape {self.u0.shape}, expected ({self.grid.n_nodes},)"
            )
        if isinstance(self.g, np.ndarray) and self.g.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"g array has shape {self.g.shape}, expected ({self.grid.n_nodes},)"
            )

    @property
    def n_steps(self) -> int:
        return round(self.T / self.tau)

    @property
    def regularized(self) -> bool:
        return self.eps > 0.0


# -- data normalization ---------------------------------------------------------------


def initial_field(grid: Grid, u0: ProfileLike) -> Field:
    """Materialize initial data as a nodal field."""
    if callable(u0):
        vals = np.asarray(u0(grid.nodes), dtype=float)
    elif isinstance(u0, np.ndarray):
        vals = u0.astype(float, copy=True)
    else:
        vals = np.full(grid.n_nodes, float(u0))
    if vals.shape != (grid.n_nodes,):
        raise ValueError(f"initial data has shape {vals.shape}, expected ({grid.n_nodes},)")
    if not np.all(np.isfinite(vals)):
        raise ValueError("initial data contains non-finite values")
    return vals


def source_at(grid: Grid, g: SourceLike, t: float) -> Field:
    """Materialize the source g at time t as a nodal field (zeros if absent)."""
    if g is None:
        return np.zeros(grid.n_nodes)
    if callable(g):
        vals = np.asarray(g(grid.nodes, t), dtype=float)
        if vals.ndim == 0:
            vals = np.full(grid.n_nodes, float(vals))
    else:
        vals = np.asarray(g, dtype=float)
    if vals.shape != (grid.n_nodes,):
        raise ValueError(f"source at t={t} has shape {vals.shape}, expected ({grid.n_nodes},)")
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"source at t={t} contains non-finite values")
    return vals


def source_is_static(g: SourceLike) -> bool:
    """True when g does not depend on time (absent or a fixed field)."""
    return g is None or isinstance(g, np.ndarray)


# -- derived fields -------------------------------------------------------------------


def forcing_potential(ops: DiscreteOperators, g_field: Field) -> Field:
    """f with (S + W) f = W g: the forcing in the chemical-potential equation."""
    return ops.riesz_inverse(g_field)


def resolvent_initialize(ops: DiscreteOperators, u0: Field, eps: float) -> Field:
    """Solve (W + eps*(S + W)) v = W u0: the elliptic smoothing of the initial data.

    The smoothed field satisfies (exactly, in the discrete norms)
    |v|_H <= |u0|_H, sum_i w_i beta_hat(v_i) <= sum_i w_i beta_hat(u0_i) for any
    convex beta_hat, eps*|v|_V^2 <= |u0|_H^2, and |v - u0|_{V*}^2 <= eps*|u0|_H^2.
    """
    if not (eps > 0.0):
        raise ValueError(f"resolvent initialization needs eps > 0, got {eps}")
    n = ops.grid.n_nodes
    upper = np.zeros((2, n))
    upper[0, 1:] = eps * ops.sw_off
    upper[1, :] = ops.weights + eps * ops.sw_main
    factor = cholesky_banded(upper)
    return cho_solve_banded((factor, False), ops.weights * u0)


@dataclass(frozen=True)
class DerivedConstants:
    """A-priori constants derived from the data, mirroring the energy estimates.

    ``f_l2v_sq`` is the discrete integral sum_{n=1}^{M} tau * |f^n|_V^2.
    ``c3`` majorizes |u0|_H^2, the potential mass of u0, and eps*|u0_eps|_V^2
    over the eps values supplied at construction. ``m2_at(eps)`` evaluates the
    regularized bound M2(eps) = 3*c3 + eps*c3 + f_l2v_sq for any eps in [0, 1).
    """

    c1: float
    c2: float
    c3: float
    u0_h_sq: float
    u0_potential: float
    f_l2v_sq: float
    M1: float
    M2: float

    def m2_at(self, eps: float) -> float:
        return 3.0 * self.c3 + eps * self.c3 + self.f_l2v_sq


def compute_constants(
    ops: DiscreteOperators,
    spec: ModelSpec,
    eps_values: Sequence[float] = (),
) -> DerivedConstants:
    """Evaluate M1, M2 and their ingredients for one problem specification.

    ``eps_values`` lists every regularization strength whose smoothed initial
    data should enter c3 (a sweep passes the whole list so one constant serves
    all runs); it defaults to {spec.eps} when the spec is regularized.
    """
    grid = ops.grid
    u0 = initial_field(grid, spec.u0)
    u0_h_sq = ops.inner_h(u0, u0)
    u0_potential = ops.mean_weighted(spec.beta.potential(u0))

    m = spec.n_steps
    times = np.linspace(0.0, spec.T, m + 1)
    if source_is_static(spec.g):
        f_field = forcing_potential(ops, source_at(grid, spec.g, 0.0))
        f_l2v_sq = spec.tau * m * ops.inner_v(f_field, f_field)
    else:
        f_l2v_sq = 0.0
        for t in times[1:]:
            f_field = forcing_potential(ops, source_at(grid, spec.g, float(t)))
            f_l2v_sq += spec.tau * ops.inner_v(f_field, f_field)

    eps_list = list(eps_values)
    if not eps_list and spec.regularized:
        eps_list = [spec.eps]
    c3 = max(u0_h_sq, u0_potential)
    for eps in eps_list:
        v = resolvent_initialize(ops, u0, eps)
        c3 = max(c3, eps * ops.inner_v(v, v))

    c1 = spec.beta.c1
    c2 = spec.eps
    m1 = 2.0 * u0_potential + f_l2v_sq
    m2 = 3.0 * c3 + c2 * c3 + f_l2v_sq
    return DerivedConstants(
        c1=c1,
        c2=c2,
        c3=c3,
        u0_h_sq=u0_h_sq,
        u0_potential=u0_potential,
        f_l2v_sq=f_l2v_sq,
        M1=m1,
        M2=m2,
    )


# -- profile library ------------------------------------------------------------------


def constant_profile(value: float) -> Callable[[np.ndarray], np.ndarray]:
    """x -> value, as a profile callable."""
    v = float(value)
    return lambda x: np.full(np.shape(x), v)


def gaussian_bump(
    center: float, width: float, amplitude: float = 1.0
) -> Callable[[np.ndarray], np.ndarray]:
    """amplitude * exp(-(x - center)^2 / (2 width^2)); effectively compactly supported."""
    c, s, a = float(center), float(width), float(amplitude)
    if s <= 0.0:
        raise ValueError(f"bump width must be positive, got {width}")
    return lambda x: a * np.exp(-0.5 * ((np.asarray(x, dtype=float) - c) / s) ** 2)


def smoothed_step(
    center: float, width: float, lo: float = 0.0, hi: float = 1.0
) -> Callable[[np.ndarray], np.ndarray]:
    """tanh ramp from lo (left) to hi (right) over the given width."""
    c, s = float(center), float(width)
    lo, hi = float(lo), float(hi)
    if s <= 0.0:
        raise ValueError(f"step width must be positive, got {width}")
    return lambda x: lo + 0.5 * (hi - lo) * (
        1.0 + np.tanh((np.asarray(x, dtype=float) - c) / s)
    )


def static_source(profile: Callable[[np.ndarray], np.ndarray]) -> Callable:
    """Lift a spatial profile to a time-independent source (x, t) -> field."""
    return lambda x, t: profile(x)


# -- manufactured solutions -----------------------------------------------------------


@dataclass(frozen=True)
class ManufacturedCase:
    """An exact solution u(x, t) with the forcing that makes it solve the equation.

    ``g`` has the source signature expected by :class:`ModelSpec`; ``u_at``
    evaluates the exact solution on a grid at one time.
    """

    beta: PowerLawBeta
    u_expr: sp.Expr
    g_expr: sp.Expr
    _u_fn: Callable = field(repr=False)
    _g_fn: Callable = field(repr=False)

    def u(self, x: np.ndarray, t: float) -> np.ndarray:
        return _broadcast(self._u_fn(np.asarray(x, dtype=float), t), np.shape(x))

    def g(self, x: np.ndarray, t: float) -> np.ndarray:
        return _broadcast(self._g_fn(np.asarray(x, dtype=float), t), np.shape(x))

    def u_at(self, grid: Grid, t: float) -> Field:
        return self.u(grid.nodes, t)


def _broadcast(vals, shape):
    arr = np.asarray(vals, dtype=float)
    if arr.shape != shape:
        arr = np.broadcast_to(arr, shape).copy()
    return arr


def manufactured_case(
    beta: PowerLawBeta,
    profile: Union[str, sp.Expr],
    grid: Grid,
    t_max: float = 1.0,
) -> ManufacturedCase:
    """Build the forcing g = u_t - (beta(u))_xx + beta(u) for a prescribed u.

    ``profile`` is a sympy expression (or string) in symbols ``x`` and ``t``; it
    must be smooth and strictly positive on the grid for t in [0, t_max], which
    keeps beta(u) = u**q + u smooth along the solution. Positivity is checked by
    sampling; a profile touching zero is rejected (for q < 1 even near-zero
    values are rejected, since beta' blows up there).
    """
    x, t = sp.symbols("x t", real=True)
    u_expr = sp.sympify(profile, locals={"x": x, "t": t})
    free = u_expr.free_symbols - {x, t}
    if free:
        raise ValueError(f"profile contains unknown symbols {sorted(map(str, free))}")

    beta_u = u_expr**beta.q + u_expr
    g_expr = sp.diff(u_expr, t) - sp.diff(beta_u, x, 2) + beta_u

    u_fn = sp.lambdify((x, t), u_expr, modules="numpy")
    g_fn = sp.lambdify((x, t), sp.simplify(g_expr), modules="numpy")

    sample_t = np.linspace(0.0, float(t_max), 5)
    lowest = min(
        float(np.min(_broadcast(u_fn(grid.nodes, ti), grid.nodes.shape)))
        for ti in sample_t
    )
    if lowest <= 0.0:
        raise ValueError(
            f"manufactured profile must be strictly positive, min sample {lowest:.3e}"
        )
    if beta.q < 1.0 and lowest <= 1.0e-8:
        raise ValueError(
            f"profile minimum {lowest:.3e} too close to zero for exponent q={beta.q} < 1"
        )
    return ManufacturedCase(beta=beta, u_expr=u_expr, g_expr=g_expr, _u_fn=u_fn, _g_fn=g_fn)


def neumann_cosine_profile(
    x_min: float, x_max: float, offset: float = 2.0, amplitude: float = 1.0
) -> sp.Expr:
    """offset + amplitude * exp(-t) * cos(pi*(x - x_min)/(x_max - x_min)).

    The half-period cosine has zero slope at both endpoints, so the profile is
    compatible with the Neumann conditions; |amplitude| < offset keeps it
    strictly positive.
    """
    if abs(amplitude) >= offset:
        raise ValueError("need |amplitude| < offset so the profile stays positive")
    x, t = sp.symbols("x t", real=True)
    left = sp.nsimplify(x_min)
    length = sp.nsimplify(x_max) - left
    return offset + amplitude * sp.exp(-t) * sp.cos(sp.pi * (x - left) / length)
