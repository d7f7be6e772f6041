"""Backward-Euler (proximal) time stepping for both evolution problems.

One step of the unregularized problem solves, for u = u^{n+1},

    W (u - u^n)/tau + (S + W) beta(u) = W g^{n+1},                      (step_p)

and one step of the regularized problem solves

    W (u - u^n)/tau + (S + W) mu(u) = 0,
    mu(u) = eps * W^{-1}(S + W) u + beta(u) + pi_eps(u) - f^{n+1},      (step_pep)

where the chemical potential mu has been eliminated nodewise (W is diagonal).
Both are the Euler--Lagrange equations of a proximal-point update in the dual
norm of :meth:`hflow.grid.DiscreteOperators.norm_dual`, which is the source of
the exact per-step invariants the verification suite checks: conservation of
lumped mass, non-expansiveness of the step map in the dual norm, and energy
dissipation.

The nonlinear systems are solved by a damped Newton iteration with a banded
LAPACK solve per iteration: tridiagonal for step_p, pentadiagonal for step_pep.
The convergence test runs *before* the first update, so a state that already
satisfies the step equation is returned bit-identically - stationary states
stay exactly stationary over any number of steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .grid import DiscreteOperators, Field
from .nonlinearity import PiEps, PowerLawBeta
from .problems import (
    ModelSpec,
    forcing_potential,
    initial_field,
    source_at,
    source_is_static,
)


@dataclass(frozen=True)
class NewtonSettings:
    """Damped-Newton policy shared by both steppers.

    ``tol_residual`` bounds the W-weighted norm sqrt(r^T W^{-1} r) of the
    assembled weak residual r (the discrete H-norm of its nodal density), so the
    residual against every nodal basis function is at most tol * sqrt(w_i).
    The slope surrogate for beta'(0) = +inf is capped at 1/tol_residual.
    """

    tol_residual: float = 1.0e-10
    max_iters: int = 50
    damping: float = 0.5
    min_step: float = 2.0**-20

    def __post_init__(self) -> None:
        if not (0.0 < self.tol_residual < 1.0):
            raise ValueError(f"tol_residual out of range: {self.tol_residual}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not (0.0 < self.damping < 1.0):
            raise ValueError(f"damping must lie in (0, 1), got {self.damping}")
        if not (0.0 < self.min_step <= 1.0):
            raise ValueError(f"min_step must lie in (0, 1], got {self.min_step}")


DEFAULT_NEWTON = NewtonSettings()


class StepFailure(RuntimeError):
    """Newton did not reach the residual tolerance within its budget."""

    def __init__(
        self,
        message: str,
        *,
        residual: float,
        iterations: int,
        step_index: int | None = None,
    ) -> None:
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.step_index = step_index


@dataclass(frozen=True)
class Trajectory:
    """States and chemical potentials of one run, plus per-step increments.

    Frame n lives at times[n]; increments[n] = (states[n+1] - states[n]) / tau.
    ``kind`` is "p" (unregularized) or "pep" (regularized, with ``eps`` > 0);
    verification guards use it to reject a trajectory handed to the wrong checker.
    """

    times: Field
    states: Field
    chem_potentials: Field
    increments: Field
    tau: float
    kind: str
    eps: float = 0.0

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def final_state(self) -> Field:
        return self.states[-1]


def residual_norm(ops: DiscreteOperators, r: Field) -> float:
    """W-weighted norm sqrt(r^T W^{-1} r) of an assembled weak residual."""
    return float(np.sqrt(np.sum(r * r / ops.weights)))


def _capped_slope(beta: PowerLawBeta, u: Field, settings: NewtonSettings) -> Field:
    return np.minimum(beta.derivative(u), 1.0 / settings.tol_residual)


def _newton(ops, u0, residual_fn, jacobian_bands_fn, bandwidth, settings, label):
    """Shared damped-Newton driver; returns the converged state."""
    u = np.array(u0, dtype=float, copy=True)
    r = residual_fn(u)
    rnorm = residual_norm(ops, r)
    iters = 0
    while rnorm > settings.tol_residual:
        if iters >= settings.max_iters:
            raise StepFailure(
                f"{label}: Newton stalled at residual {rnorm:.3e} "
                f"after {iters} iterations",
                residual=rnorm,
                iterations=iters,
            )
        ab = jacobian_bands_fn(u)
        d = solve_banded(bandwidth, ab, -r)
        lam = 1.0
        while True:
            u_try = u + lam * d
            r_try = residual_fn(u_try)
            rn_try = residual_norm(ops, r_try)
            if rn_try < rnorm:
                u, r, rnorm = u_try, r_try, rn_try
                break
            lam *= settings.damping
            if lam < settings.min_step:
                raise StepFailure(
                    f"{label}: line search stalled at residual {rnorm:.3e} "
                    f"(iteration {iters + 1})",
                    residual=rnorm,
                    iterations=iters + 1,
                )
        iters += 1
    return u


def step_p(
    ops: DiscreteOperators,
    beta: PowerLawBeta,
    u_prev: Field,
    g_next: Field,
    tau: float,
    settings: NewtonSettings = DEFAULT_NEWTON,
) -> Field:
    """One backward-Euler step of the unregularized problem; returns u^{n+1}."""
    w = ops.weights
    rhs = w * g_next

    def resid(u: Field) -> Field:
        return w * (u - u_prev) / tau + ops.apply_sw(beta.value(u)) - rhs

    def bands(u: Field) -> Field:
        # J = W/tau + (S + W) diag(beta'(u)), tridiagonal (column-scaled S + W).
        slope = _capped_slope(beta, u, settings)
        n = u.shape[0]
        ab = np.zeros((3, n))
        ab[0, 1:] = ops.sw_off * slope[1:]
        ab[1, :] = w / tau + ops.sw_main * slope
        ab[2, :-1] = ops.sw_off * slope[:-1]
        return ab

    return _newton(ops, u_prev, resid, bands, (1, 1), settings, "step_p")


def chemical_potential_p(beta: PowerLawBeta, u: Field, f_next: Field) -> Field:
    """mu^{n+1} = beta(u^{n+1}) - f^{n+1} for the unregularized problem."""
    return beta.value(u) - f_next


def chemical_potential_pep(
    ops: DiscreteOperators,
    beta: PowerLawBeta,
    pi: PiEps,
    u: Field,
    f_next: Field,
) -> Field:
    """mu = eps*W^{-1}(S+W)u + beta(u) + pi(u) - f for the regularized problem."""
    return pi.eps * ops.apply_A(u) + beta.value(u) + pi.value(u) - f_next


def _penta_base(ops: DiscreteOperators) -> tuple[Field, Field, Field]:
    """Diagonals of (S+W) W^{-1} (S+W): the symmetric pentadiagonal core of the
    regularized Jacobian (independent of the state and of eps)."""
    b = ops.sw_main
    c = ops.sw_off
    w = ops.weights
    p0 = b * b / w
    p0[1:] += c * c / w[:-1]
    p0[:-1] += c * c / w[1:]
    p1 = b[:-1] * c / w[:-1] + c * b[1:] / w[1:]
    p2 = c[:-1] * c[1:] / w[1:-1]
    return p0, p1, p2


def step_pep(
    ops: DiscreteOperators,
    beta: PowerLawBeta,
    pi: PiEps,
    u_prev: Field,
    f_next: Field,
    tau: float,
    settings: NewtonSettings = DEFAULT_NEWTON,
) -> tuple[Field, Field]:
    """One backward-Euler step of the regularized problem.

    Returns (u^{n+1}, mu^{n+1}) with mu evaluated at the converged state.
    """
    w = ops.weights
    eps = pi.eps
    p0, p1, p2 = _penta_base(ops)

    def resid(u: Field) -> Field:
        mu = chemical_potential_pep(ops, beta, pi, u, f_next)
        return w * (u - u_prev) / tau + ops.apply_sw(mu)

    def bands(u: Field) -> Field:
        # J = W/tau + eps*(S+W)W^{-1}(S+W) + (S+W) diag(beta'(u) - eps).
        slope = _capped_slope(beta, u, settings) - eps
        n = u.shape[0]
        ab = np.zeros((5, n))
        ab[0, 2:] = eps * p2
        ab[1, 1:] = eps * p1 + ops.sw_off * slope[1:]
        ab[2, :] = w / tau + eps * p0 + ops.sw_main * slope
        ab[3, :-1] = eps * p1 + ops.sw_off * slope[:-1]
        ab[4, :-2] = eps * p2
        return ab

    u_next = _newton(ops, u_prev, resid, bands, (2, 2), settings, "step_pep")
    return u_next, chemical_potential_pep(ops, beta, pi, u_next, f_next)


def integrate(
    ops: DiscreteOperators,
    spec: ModelSpec,
    settings: NewtonSettings = DEFAULT_NEWTON,
) -> Trajectory:
    """March spec.n_steps backward-Euler steps and record the full trajectory.

    ``spec.u0`` is used verbatim (no implicit smoothing of the initial state).
    A step that fails to converge raises :class:`StepFailure` annotated with the
    index of the offending step.
    """
    grid = ops.grid
    m = spec.n_steps
    tau = spec.tau
    times = np.linspace(0.0, spec.T, m + 1)
    kind = "pep" if spec.regularized else "p"
    pi = PiEps(spec.eps) if spec.regularized else None

    static = source_is_static(spec.g)
    if static:
        g_field = source_at(grid, spec.g, 0.0)
        f_field = forcing_potential(ops, g_field)

    def data_at(t: float) -> tuple[Field, Field]:
        if static:
            return g_field, f_field
        gf = source_at(grid, spec.g, t)
        return gf, forcing_potential(ops, gf)

    n_nodes = grid.n_nodes
    states = np.empty((m + 1, n_nodes))
    potentials = np.empty((m + 1, n_nodes))
    increments = np.empty((m, n_nodes))

    states[0] = initial_field(grid, spec.u0)
    _, f0 = data_at(0.0)
    if kind == "p":
        potentials[0] = chemical_potential_p(spec.beta, states[0], f0)
    else:
        potentials[0] = chemical_potential_pep(ops, spec.beta, pi, states[0], f0)

    for n in range(m):
        t_next = float(times[n + 1])
        g_next, f_next = data_at(t_next)
        try:
            if kind == "p":
                u_next = step_p(ops, spec.beta, states[n], g_next, tau, settings)
                mu_next = chemical_potential_p(spec.beta, u_next, f_next)
            else:
                u_next, mu_next = step_pep(
                    ops, spec.beta, pi, states[n], f_next, tau, settings
                )
        except StepFailure as exc:
            raise StepFailure(
                f"step {n + 1}/{m} (t = {t_next:.6g}) failed: {exc}",
                residual=exc.residual,
                iterations=exc.iterations,
                step_index=n,
            ) from exc
        states[n + 1] = u_next
        potentials[n + 1] = mu_next
        increments[n] = (u_next - states[n]) / tau

    times.flags.writeable = False
    states.flags.writeable = False
    potentials.flags.writeable = False
    increments.flags.writeable = False
    return Trajectory(
        times=times,
        states=states,
        chem_potentials=potentials,
        increments=increments,
        tau=tau,
        kind=kind,
        eps=spec.eps,
    )
