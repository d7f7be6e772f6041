"""Verification harness: a-priori bounds, rate studies, and convergence checks.

Every estimate the solvers are supposed to satisfy is expressed as a
:class:`CheckRecord`: a named family of inequalities lhs(sample) <= rhs(sample)
evaluated along a trajectory (samples are times) or along a parameter sweep
(samples are regularization strengths). The discrete inequalities mirror the
continuous energy estimates exactly - with the collocation quadrature used here
they are theorems of the scheme, not approximations - so the default 5% slack
is pure floating-point headroom.

The regularization error between the two problems is measured by

    J(eps) = sup_n |u_eps^n - u^n|_{V*}^2
             + sum_{n=1}^{M} tau * (beta(u_eps^n) - beta(u^n), u_eps^n - u^n)_H,

both runs on the same grid and time step, the regularized run started from the
resolvent-initialized data. J(eps) -> 0 at least like eps as eps -> 0; the
sweep fits the observed rate on a log-log line.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import DiscreteOperators, Field, Grid, build_operators
from .nonlinearity import PowerLawBeta
from .problems import (
    DerivedConstants,
    ManufacturedCase,
    ModelSpec,
    compute_constants,
    initial_field,
    manufactured_case,
    resolvent_initialize,
    source_at,
)
from .stepping import DEFAULT_NEWTON, NewtonSettings, Trajectory, integrate

#: Relative tolerance for the identity |mu^{n+1}|_V = |delta^n|_{V*}.
IDENTITY_RTOL = 1.0e-8
#: Default slack on the a-priori inequalities (pure FP headroom).
DEFAULT_SLACK = 0.05
#: Relative slack on the resolvent-initialization bounds.
INIT_SLACK = 1.0e-8


# -- check records --------------------------------------------------------------------


@dataclass(frozen=True)
class CheckRecord:
    """One named family of inequalities lhs_k <= rhs_k * (1 + slack).

    ``at`` holds the sample coordinates (times for trajectory checks, eps for
    sweep checks); ``margins`` is the relative headroom (rhs - lhs)/max(rhs, 1)
    per sample, negative only when a sample fails its slack.
    """

    name: str
    at: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    slack: float

    def __post_init__(self) -> None:
        if not (len(self.at) == len(self.lhs) == len(self.rhs)):
            raise ValueError(f"check {self.name}: sample arrays disagree in length")

    @property
    def margins(self) -> np.ndarray:
        scale = np.maximum(np.abs(self.rhs), 1.0)
        return (self.rhs - self.lhs) / scale

    @property
    def sample_passed(self) -> np.ndarray:
        allowance = self.rhs * (1.0 + self.slack) + 1.0e-12 * (1.0 + np.abs(self.rhs))
        return self.lhs <= allowance

    @property
    def passed(self) -> bool:
        return bool(np.all(self.sample_passed))

    @property
    def worst_margin(self) -> float:
        return float(np.min(self.margins))


@dataclass(frozen=True)
class RateRecord:
    """Log-log least-squares fit of a positive quantity against eps."""

    epsilons: np.ndarray
    values: np.ndarray
    slope: float
    intercept: float
    residual: float  # max |log10 value - fit| over the fitted points


@dataclass
class VerificationReport:
    checks: list[CheckRecord] = field(default_factory=list)
    rates: list[RateRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed_checks(self) -> list[CheckRecord]:
        return [c for c in self.checks if not c.passed]


# -- per-trajectory series ------------------------------------------------------------


def _cum0(tau: float, series: np.ndarray) -> np.ndarray:
    """Running integral of a per-step series, prefixed with 0 at t = 0."""
    return np.concatenate(([0.0], np.cumsum(tau * series)))


def _frame_map(fn, frames: np.ndarray) -> np.ndarray:
    return np.array([fn(frame) for frame in frames])


def _identity_record(ops: DiscreteOperators, traj: Trajectory, prefix: str) -> CheckRecord:
    """|mu^{n+1}|_V vs |delta^n|_{V*}: equal up to the Newton tolerance."""
    mu_v = _frame_map(ops.norm_v, traj.chem_potentials[1:])
    incr_dual = _frame_map(ops.norm_dual, traj.increments)
    scale = max(float(np.max(mu_v, initial=0.0)), float(np.max(incr_dual, initial=0.0)))
    floor = 1.0e-12 * (1.0 + scale)
    denom = np.maximum(np.maximum(mu_v, incr_dual), floor)
    deviation = np.abs(mu_v - incr_dual) / denom
    return CheckRecord(
        name=f"{prefix}-potential-increment-identity",
        at=traj.times[1:],
        lhs=deviation,
        rhs=np.full(traj.n_steps, IDENTITY_RTOL),
        slack=0.0,
    )


def check_apriori_p(
    ops: DiscreteOperators,
    traj: Trajectory,
    beta: PowerLawBeta,
    consts: DerivedConstants,
    slack: float = DEFAULT_SLACK,
) -> list[CheckRecord]:
    """The three energy estimates of the unregularized problem, plus the identity.

    Along the whole trajectory:
      dissipation:            sum tau |delta|_{V*}^2 + 2 c1 |u(t)|_H^2  <= M1
      potential integral:     sum tau |mu|_V^2                          <= M1
      nonlinearity integral:  sum tau |beta(u)|_V^2                     <= 2 (M1 + |f|^2)
    """
    if traj.kind != "p":
        raise ValueError(f"expected an unregularized trajectory, got kind={traj.kind!r}")
    tau = traj.tau
    times = traj.times
    m = traj.n_steps

    h_sq = _frame_map(lambda u: ops.inner_h(u, u), traj.states)
    incr_dual_sq = _frame_map(lambda d: ops.norm_dual(d) ** 2, traj.increments)
    mu_v_sq = _frame_map(lambda v: ops.inner_v(v, v), traj.chem_potentials[1:])
    beta_v_sq = np.array(
        [ops.inner_v(b, b) for b in (beta.value(u) for u in traj.states[1:])]
    )

    records = [
        CheckRecord(
            name="p-dissipation",
            at=times,
            lhs=_cum0(tau, incr_dual_sq) + 2.0 * consts.c1 * h_sq,
            rhs=np.full(m + 1, consts.M1),
            slack=slack,
        ),
        CheckRecord(
            name="p-potential-integral",
            at=times,
            lhs=_cum0(tau, mu_v_sq),
            rhs=np.full(m + 1, consts.M1),
            slack=slack,
        ),
        CheckRecord(
            name="p-nonlinearity-integral",
            at=times,
            lhs=_cum0(tau, beta_v_sq),
            rhs=np.full(m + 1, 2.0 * (consts.M1 + consts.f_l2v_sq)),
            slack=slack,
        ),
        _identity_record(ops, traj, "p"),
    ]
    return records


def check_apriori_pep(
    ops: DiscreteOperators,
    traj: Trajectory,
    beta: PowerLawBeta,
    consts: DerivedConstants,
    slack: float = DEFAULT_SLACK,
) -> list[CheckRecord]:
    """The four energy estimates of the regularized problem, plus the identity.

    With c2 = eps, M2 = M2(eps) and F2 = |f|_{L^2(0,T;V)}^2:
      dissipation:       sum tau |delta|_{V*}^2 + eps |u|_V^2 + (2c1 - c2)|u|_H^2 <= M2
      potential:         sum tau |mu|_V^2                                        <= M2
      nonlinearity:      sum tau |beta(u)|_H^2      <= 3 (M2 + c2^2 M2 T/(2c1 - c2) + F2)
      elliptic term:     sum tau |eps A u|_H^2      <= 16 (sum tau |mu|_V^2
                                                          + c2^2 sum tau |u|_H^2 + F2)
    """
    if traj.kind != "pep":
        raise ValueError(f"expected a regularized trajectory, got kind={traj.kind!r}")
    eps = traj.eps
    tau = traj.tau
    times = traj.times
    m = traj.n_steps
    horizon = tau * m

    c1 = consts.c1
    c2 = eps
    m2 = consts.m2_at(eps)
    f2 = consts.f_l2v_sq

    h_sq = _frame_map(lambda u: ops.inner_h(u, u), traj.states)
    v_sq = _frame_map(lambda u: ops.inner_v(u, u), traj.states)
    incr_dual_sq = _frame_map(lambda d: ops.norm_dual(d) ** 2, traj.increments)
    mu_v_sq = _frame_map(lambda v: ops.inner_v(v, v), traj.chem_potentials[1:])
    beta_h_sq = np.array(
        [ops.inner_h(b, b) for b in (beta.value(u) for u in traj.states[1:])]
    )
    au_h_sq = np.array(
        [ops.inner_h(a, a) for a in (eps * ops.apply_A(u) for u in traj.states[1:])]
    )

    mu_total = float(np.sum(tau * mu_v_sq))
    u_h_total = float(np.sum(tau * h_sq[1:]))
    elliptic_rhs = 16.0 * (mu_total + c2**2 * u_h_total + f2)

    records = [
        CheckRecord(
            name="pep-dissipation",
            at=times,
            lhs=_cum0(tau, incr_dual_sq) + eps * v_sq + (2.0 * c1 - c2) * h_sq,
            rhs=np.full(m + 1, m2),
            slack=slack,
        ),
        CheckRecord(
            name="pep-potential-integral",
            at=times,
            lhs=_cum0(tau, mu_v_sq),
            rhs=np.full(m + 1, m2),
            slack=slack,
        ),
        CheckRecord(
            name="pep-nonlinearity-integral",
            at=times,
            lhs=_cum0(tau, beta_h_sq),
            rhs=np.full(
                m + 1,
                3.0 * (m2 + c2**2 * m2 * horizon / (2.0 * c1 - c2) + f2),
            ),
            slack=slack,
        ),
        CheckRecord(
            name="pep-elliptic-integral",
            at=times,
            lhs=_cum0(tau, au_h_sq),
            rhs=np.full(m + 1, elliptic_rhs),
            slack=slack,
        ),
        _identity_record(ops, traj, "pep"),
    ]
    return records


# -- resolvent initialization ---------------------------------------------------------


def check_resolvent_init(
    ops: DiscreteOperators,
    beta: PowerLawBeta,
    u0: Field,
    eps_values,
    slack: float = INIT_SLACK,
) -> list[CheckRecord]:
    """Exact bounds satisfied by the smoothed initial data, across eps values.

      |u0_eps|_H <= |u0|_H                      (the smoothing contracts in H)
      sum w beta_hat(u0_eps) <= sum w beta_hat(u0)   (Jensen, substochastic kernel)
      eps |u0_eps|_V^2 <= |u0|_H^2
      |u0_eps - u0|_{V*}^2 <= eps |u0|_H^2      (the eps^(1/2) initialization error)
    """
    eps_arr = np.asarray(sorted(float(e) for e in eps_values), dtype=float)[::-1]
    if eps_arr.size == 0:
        raise ValueError("need at least one eps value")
    u0_h = ops.norm_h(u0)
    u0_pot = ops.mean_weighted(beta.potential(u0))

    h_norms, pots, v_scaled, dual_dist = [], [], [], []
    for eps in eps_arr:
        v = resolvent_initialize(ops, u0, float(eps))
        h_norms.append(ops.norm_h(v))
        pots.append(ops.mean_weighted(beta.potential(v)))
        v_scaled.append(eps * ops.inner_v(v, v))
        dual_dist.append(ops.norm_dual(v - u0) ** 2)

    k = eps_arr.size
    return [
        CheckRecord(
            name="init-h-contraction",
            at=eps_arr,
            lhs=np.array(h_norms),
            rhs=np.full(k, u0_h),
            slack=slack,
        ),
        CheckRecord(
            name="init-potential-contraction",
            at=eps_arr,
            lhs=np.array(pots),
            rhs=np.full(k, u0_pot),
            slack=slack,
        ),
        CheckRecord(
            name="init-v-seminorm",
            at=eps_arr,
            lhs=np.array(v_scaled),
            rhs=np.full(k, u0_h**2),
            slack=slack,
        ),
        CheckRecord(
            name="init-dual-distance",
            at=eps_arr,
            lhs=np.array(dual_dist),
            rhs=eps_arr * u0_h**2,
            slack=slack,
        ),
    ]


# -- regularization error and rate sweep ----------------------------------------------


@dataclass(frozen=True)
class ErrorFunctional:
    """Split of J(eps): the sup dual-norm-squared term and the coupling integral."""

    sup_dual_sq: float
    coupling: float

    @property
    def total(self) -> float:
        return self.sup_dual_sq + self.coupling


def error_functional(
    ops: DiscreteOperators,
    traj_p: Trajectory,
    traj_pep: Trajectory,
    beta: PowerLawBeta,
) -> ErrorFunctional:
    """J(eps) between matching trajectories on the same grid and time step."""
    if traj_p.kind != "p" or traj_pep.kind != "pep":
        raise ValueError("error_functional expects (unregularized, regularized) trajectories")
    if traj_p.states.shape != traj_pep.states.shape:
        raise ValueError("trajectories live on different grids or step counts")
    if not np.allclose(traj_p.times, traj_pep.times, rtol=0.0, atol=1.0e-12):
        raise ValueError("trajectories use different time grids")

    tau = traj_p.tau
    diffs = traj_pep.states - traj_p.states
    sup_dual_sq = max(ops.norm_dual(d) ** 2 for d in diffs)
    coupling = 0.0
    for u_e, u, d in zip(traj_pep.states[1:], traj_p.states[1:], diffs[1:]):
        coupling += tau * ops.inner_h(beta.value(u_e) - beta.value(u), d)
    return ErrorFunctional(sup_dual_sq=float(sup_dual_sq), coupling=float(coupling))


def rate_fit(epsilons, values) -> RateRecord:
    """Least-squares line through (log10 eps, log10 value).

    Requires at least 4 points spanning at least two decades in eps, all values
    strictly positive.
    """
    eps_arr = np.asarray(epsilons, dtype=float)
    val_arr = np.asarray(values, dtype=float)
    if eps_arr.shape != val_arr.shape or eps_arr.ndim != 1:
        raise ValueError("rate_fit needs matching 1-d arrays")
    if eps_arr.size < 4:
        raise ValueError(f"rate fit needs >= 4 points, got {eps_arr.size}")
    if np.any(eps_arr <= 0.0):
        raise ValueError("rate fit needs positive eps values")
    span = np.log10(eps_arr.max() / eps_arr.min())
    if span < 2.0 - 1.0e-9:
        raise ValueError(f"eps values span only {span:.3f} decades, need >= 2")
    if np.any(val_arr <= 0.0):
        bad = eps_arr[val_arr <= 0.0]
        raise ValueError(f"nonpositive functional values at eps = {bad}")

    order = np.argsort(eps_arr)[::-1]
    eps_arr, val_arr = eps_arr[order], val_arr[order]
    log_e, log_v = np.log10(eps_arr), np.log10(val_arr)
    slope, intercept = np.polyfit(log_e, log_v, 1)
    residual = float(np.max(np.abs(log_v - (slope * log_e + intercept))))
    return RateRecord(
        epsilons=eps_arr,
        values=val_arr,
        slope=float(slope),
        intercept=float(intercept),
        residual=residual,
    )


@dataclass(frozen=True)
class SweepEntry:
    eps: float
    sup_dual_sq: float
    coupling: float
    functional: float
    included: bool  # excluded points sit below the solver-noise floor


@dataclass(frozen=True)
class SweepResult:
    entries: list[SweepEntry]
    rate: RateRecord
    base: Trajectory


def eps_sweep(
    ops: DiscreteOperators,
    spec: ModelSpec,
    eps_values,
    settings: NewtonSettings = DEFAULT_NEWTON,
    threads: int = 1,
) -> SweepResult:
    """Run the regularization sweep and fit the decay rate of J(eps).

    ``spec`` describes the unregularized run; each regularized run reuses its
    grid, step, and source, starting from the resolvent-initialized data.
    Functional values below 10x the Newton tolerance are excluded from the fit
    (they are solver noise, not regularization error).
    """
    if spec.regularized:
        raise ValueError("eps_sweep expects an unregularized base spec (eps = 0)")
    eps_list = sorted((float(e) for e in eps_values), reverse=True)
    if any(not (0.0 < e < 1.0) for e in eps_list):
        raise ValueError(f"sweep eps values must lie in (0, 1): {eps_list}")

    base = integrate(ops, spec, settings)
    u0 = initial_field(ops.grid, spec.u0)

    def run_one(eps: float) -> SweepEntry:
        u0e = resolvent_initialize(ops, u0, eps)
        spec_e = replace(spec, eps=eps, u0=u0e)
        traj_e = integrate(ops, spec_e, settings)
        split = error_functional(ops, base, traj_e, spec.beta)
        return SweepEntry(
            eps=eps,
            sup_dual_sq=split.sup_dual_sq,
            coupling=split.coupling,
            functional=split.total,
            included=split.total >= 10.0 * settings.tol_residual,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(run_one, eps_list))
    else:
        entries = [run_one(e) for e in eps_list]

    fit_pts = [(e.eps, e.functional) for e in entries if e.included]
    if len(fit_pts) < 4:
        raise ValueError(
            f"only {len(fit_pts)} sweep points above the noise floor; cannot fit a rate"
        )
    rate = rate_fit([p[0] for p in fit_pts], [p[1] for p in fit_pts])
    return SweepResult(entries=entries, rate=rate, base=base)


# -- whole-spec verification ----------------------------------------------------------


def verify_spec(
    ops: DiscreteOperators,
    spec: ModelSpec,
    eps_values=(),
    slack: float = DEFAULT_SLACK,
    settings: NewtonSettings = DEFAULT_NEWTON,
    threads: int = 1,
) -> VerificationReport:
    """Run the unregularized problem plus one regularized run per eps, check all bounds.

    The derived constants are computed once with the full eps list (so c3 majorizes
    every smoothed initial state) and shared across all checks.
    """
    eps_list = sorted((float(e) for e in eps_values), reverse=True)
    base_spec = replace(spec, eps=0.0)
    consts = compute_constants(ops, base_spec, eps_values=eps_list)
    u0 = initial_field(ops.grid, spec.u0)

    report = VerificationReport(meta={"constants": consts})
    base = integrate(ops, base_spec, settings)
    report.checks.extend(check_apriori_p(ops, base, spec.beta, consts, slack))

    def run_eps(eps: float) -> list[CheckRecord]:
        u0e = resolvent_initialize(ops, u0, eps)
        spec_e = replace(spec, eps=eps, u0=u0e)
        traj_e = integrate(ops, spec_e, settings)
        return check_apriori_pep(ops, traj_e, spec.beta, consts, slack)

    if eps_list:
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                for recs in pool.map(run_eps, eps_list):
                    report.checks.extend(recs)
        else:
            for eps in eps_list:
                report.checks.extend(run_eps(eps))
        report.checks.extend(check_resolvent_init(ops, spec.beta, u0, eps_list))
    return report


# -- domain truncation ----------------------------------------------------------------


@dataclass(frozen=True)
class DoublingRecord:
    """Outcome of rerunning a compactly-supported problem on a doubled domain."""

    valid: bool
    reason: str | None
    difference: float | None       # max over frames of the H-norm mismatch (base grid)
    sup_difference: float | None   # max over frames and nodes of |mismatch|


def _support_violation(grid: Grid, vals: Field, margin: float, tol: float) -> str | None:
    threshold = tol * (1.0 + float(np.max(np.abs(vals), initial=0.0)))
    supported = np.abs(vals) > threshold
    if not np.any(supported):
        return None
    xs = grid.nodes[supported]
    lo, hi = grid.x_min + margin, grid.x_max - margin
    if xs.min() < lo or xs.max() > hi:
        return (
            f"support reaches x = [{xs.min():.6g}, {xs.max():.6g}], "
            f"inside the margin band [{lo:.6g}, {hi:.6g}]"
        )
    return None


def domain_doubling_study(
    spec: ModelSpec,
    settings: NewtonSettings = DEFAULT_NEWTON,
    margin_fraction: float = 0.1,
    support_tol: float = 1.0e-10,
) -> DoublingRecord:
    """Rerun the problem on a domain of twice the length (same h) and compare.

    Valid only for callable data whose support stays at least ``margin_fraction``
    of the domain length away from both boundaries; otherwise the record comes
    back invalid with a reason instead of a meaningless difference.
    """
    grid = spec.grid
    if not callable(spec.u0) or not (spec.g is None or callable(spec.g)):
        return DoublingRecord(
            valid=False,
            reason="domain study needs callable data (nodal arrays cannot be re-sampled)",
            difference=None,
            sup_difference=None,
        )

    margin = margin_fraction * grid.length
    reason = _support_violation(grid, initial_field(grid, spec.u0), margin, support_tol)
    if reason is not None:
        return DoublingRecord(False, f"initial data: {reason}", None, None)
    if spec.g is not None:
        for t in (0.0, 0.5 * spec.T, spec.T):
            reason = _support_violation(
                grid, source_at(grid, spec.g, t), margin, support_tol
            )
            if reason is not None:
                return DoublingRecord(False, f"source at t={t:.6g}: {reason}", None, None)

    big_grid = Grid(grid.x_min, grid.x_min + 2.0 * grid.length, 2 * grid.n_cells)
    ops_base = build_operators(grid)
    ops_big = build_operators(big_grid)

    def run(ops: DiscreteOperators, g: Grid) -> Trajectory:
        run_spec = replace(spec, grid=g)
        if spec.regularized:
            u0e = resolvent_initialize(ops, initial_field(g, spec.u0), spec.eps)
            run_spec = replace(run_spec, u0=u0e)
        return integrate(ops, run_spec, settings)

    traj_base = run(ops_base, grid)
    traj_big = run(ops_big, big_grid)

    n = grid.n_nodes
    diff_frames = traj_big.states[:, :n] - traj_base.states
    h_norms = _frame_map(ops_base.norm_h, diff_frames)
    return DoublingRecord(
        valid=True,
        reason=None,
        difference=float(np.max(h_norms)),
        sup_difference=float(np.max(np.abs(diff_frames))),
    )


# -- manufactured-solution convergence ------------------------------------------------


@dataclass(frozen=True)
class ConvergenceStudy:
    """Final-time H-norm errors against an exact solution, with the fitted order."""

    parameters: np.ndarray  # h (spatial) or tau (temporal), descending
    errors: np.ndarray
    order: float

    @property
    def ratios(self) -> np.ndarray:
        return self.errors[:-1] / self.errors[1:]


def _manufactured_error(
    ops: DiscreteOperators,
    case: ManufacturedCase,
    T: float,
    tau: float,
    settings: NewtonSettings,
) -> float:
    spec = ModelSpec(
        beta=case.beta,
        grid=ops.grid,
        T=T,
        tau=tau,
        u0=case.u_at(ops.grid, 0.0),
        g=case.g,
        eps=0.0,
    )
    traj = integrate(ops, spec, settings)
    err = traj.final_state - case.u_at(ops.grid, T)
    return ops.norm_h(err)


def spatial_study(
    beta: PowerLawBeta,
    profile,
    x_min: float,
    x_max: float,
    n_list,
    T: float,
    tau: float,
    settings: NewtonSettings = DEFAULT_NEWTON,
) -> ConvergenceStudy:
    """Refine h at fixed (small) tau; second-order elements give order ~ 2."""
    n_list = sorted(int(n) for n in n_list)
    hs, errs = [], []
    for n in n_list:  # ascending n, so h comes out descending
        grid = Grid(x_min, x_max, n)
        ops = build_operators(grid)
        case = manufactured_case(beta, profile, grid, t_max=T)
        hs.append(grid.h)
        errs.append(_manufactured_error(ops, case, T, tau, settings))
    hs, errs = np.array(hs), np.array(errs)
    order = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    return ConvergenceStudy(parameters=hs, errors=errs, order=order)


def temporal_study(
    beta: PowerLawBeta,
    profile,
    x_min: float,
    x_max: float,
    n_cells: int,
    T: float,
    tau_list,
    settings: NewtonSettings = DEFAULT_NEWTON,
    refinement: int = 32,
) -> ConvergenceStudy:
    """Refine tau at fixed h; backward Euler gives order ~ 1.

    Errors are measured against a reference solve on the *same grid* with
    tau_ref = min(tau)/refinement, so the fixed-h spatial error cancels exactly
    and the fit sees the pure time-discretization error. (Measuring against the
    exact solution instead would fold in the h-dependent floor, which pollutes
    the order once the smallest tau error approaches it.)
    """
    taus = sorted((float(t) for t in tau_list), reverse=True)
    grid = Grid(x_min, x_max, int(n_cells))
    ops = build_operators(grid)
    case = manufactured_case(beta, profile, grid, t_max=T)

    def final_state(tau: float) -> Field:
        spec = ModelSpec(
            beta=beta, grid=grid, T=T, tau=tau,
            u0=case.u_at(grid, 0.0), g=case.g, eps=0.0,
        )
        return integrate(ops, spec, settings).final_state

    reference = final_state(taus[-1] / refinement)
    errs = [ops.norm_h(final_state(tau) - reference) for tau in taus]
    taus, errs = np.array(taus), np.array(errs)
    order = float(np.polyfit(np.log(taus), np.log(errs), 1)[0])
    return ConvergenceStudy(parameters=taus, errors=errs, order=order)
