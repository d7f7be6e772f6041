"""Command-line front end: flat key = value configs driving solver and study runs.

Modes
-----
solve-p        integrate the unregularized problem, write trajectory.csv
solve-pep      integrate the regularized problem (one eps), write trajectory.csv
verify         run the a-priori estimate checks for eps = 0 and each listed eps
sweep-eps      regularization-error sweep over eps with a log-log rate fit
manufactured   spatial and temporal convergence orders against an exact solution
domain-study   rerun compactly-supported data on a doubled domain and compare

Configuration is a flat ``key = value`` file ('#' starts a comment line). Any
key may be overridden by an environment variable ``HFLOW_<KEY>`` (upper-cased
key), and ``--out``, ``--stride``, ``--threads`` override both. Exit codes:
0 all checks passed, 1 a check failed, 2 invalid configuration, 3 solver failure.

All emitted CSV is byte-deterministic: fixed field order, floats via
format(x, '.17g'), '\n' newlines.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .grid import Grid, build_operators
from .nonlinearity import PowerLawBeta
from .problems import (
    ModelSpec,
    constant_profile,
    gaussian_bump,
    initial_field,
    neumann_cosine_profile,
    resolvent_initialize,
    smoothed_step,
    static_source,
)
from .stepping import NewtonSettings, StepFailure, Trajectory, integrate
from .verification import (
    CheckRecord,
    SweepResult,
    domain_doubling_study,
    eps_sweep,
    spatial_study,
    temporal_study,
    verify_spec,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3

MODES = ("solve-p", "solve-pep", "verify", "sweep-eps", "manufactured", "domain-study")
U0_KINDS = ("constant", "bump", "step")
G_KINDS = ("zero", "constant", "bump")


class ConfigError(Exception):
    """Configuration problem; the message names the offending key or line."""


# -- configuration --------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Parsed, validated, canonically-typed run configuration.

    Regenerating the file with :func:`config_text` and re-parsing yields an
    equal RunConfig.
    """

    mode: str
    q: float
    x_max: float
    x_min: float = 0.0
    n_cells: int | None = None
    T: float | None = None
    tau: float | None = None
    eps: tuple[float, ...] = ()
    u0_kind: str = "constant"
    u0_value: float = 1.0
    u0_center: float | None = None
    u0_width: float = 1.0
    u0_amplitude: float = 1.0
    u0_lo: float = 0.0
    u0_hi: float = 1.0
    g_kind: str = "zero"
    g_value: float = 0.0
    g_center: float | None = None
    g_width: float = 1.0
    g_amplitude: float = 0.0
    out: str = "."
    stride: int = 10
    threads: int = 1
    seed: int = 0
    resolvent_init: bool = True
    slack: float = 0.05
    slope_min: float = 0.45
    residual_max: float = 0.15
    diff_max: float = 1.0e-8
    newton_tol: float = 1.0e-10
    newton_max_iters: int = 50
    mm_profile: str = ""
    mm_ns: tuple[int, ...] = (8, 16, 32, 64)
    mm_taus: tuple[float, ...] = (0.04, 0.02, 0.01, 0.005)
    mm_spatial_t: float = 0.05
    mm_spatial_tau: float = 2.0e-5
    mm_temporal_t: float = 0.4
    mm_temporal_n: int = 64
    mm_spatial_order_min: float = 1.9
    mm_temporal_order_lo: float = 0.9
    mm_temporal_order_hi: float = 1.1


def _conv_float(key: str, s: str) -> float:
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"key {key!r}: expected a number, got {s!r}") from None


def _conv_int(key: str, s: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise ConfigError(f"key {key!r}: expected an integer, got {s!r}") from None


def _conv_bool(key: str, s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"key {key!r}: expected true/false, got {s!r}")


def _conv_floats(key: str, s: str) -> tuple[float, ...]:
    if not s.strip():
        return ()
    return tuple(_conv_float(key, part) for part in s.split(","))


def _conv_ints(key: str, s: str) -> tuple[int, ...]:
    if not s.strip():
        return ()
    return tuple(_conv_int(key, part) for part in s.split(","))


def _conv_str(key: str, s: str) -> str:
    return s


_CONVERTERS = {
    "mode": _conv_str,
    "q": _conv_float,
    "x_min": _conv_float,
    "x_max": _conv_float,
    "n_cells": _conv_int,
    "T": _conv_float,
    "tau": _conv_float,
    "eps": _conv_floats,
    "u0_kind": _conv_str,
    "u0_value": _conv_float,
    "u0_center": _conv_float,
    "u0_width": _conv_float,
    "u0_amplitude": _conv_float,
    "u0_lo": _conv_float,
    "u0_hi": _conv_float,
    "g_kind": _conv_str,
    "g_value": _conv_float,
    "g_center": _conv_float,
    "g_width": _conv_float,
    "g_amplitude": _conv_float,
    "out": _conv_str,
    "stride": _conv_int,
    "threads": _conv_int,
    "seed": _conv_int,
    "resolvent_init": _conv_bool,
    "slack": _conv_float,
    "slope_min": _conv_float,
    "residual_max": _conv_float,
    "diff_max": _conv_float,
    "newton_tol": _conv_float,
    "newton_max_iters": _conv_int,
    "mm_profile": _conv_str,
    "mm_ns": _conv_ints,
    "mm_taus": _conv_floats,
    "mm_spatial_t": _conv_float,
    "mm_spatial_tau": _conv_float,
    "mm_temporal_t": _conv_float,
    "mm_temporal_n": _conv_int,
    "mm_spatial_order_min": _conv_float,
    "mm_temporal_order_lo": _conv_float,
    "mm_temporal_order_hi": _conv_float,
}

#: Keys a mode insists on (beyond mode/q/x_max, which every mode needs).
_MODE_REQUIRES = {
    "solve-p": ("n_cells", "T", "tau"),
    "solve-pep": ("n_cells", "T", "tau", "eps"),
    "verify": ("n_cells", "T", "tau"),
    "sweep-eps": ("n_cells", "T", "tau", "eps"),
    "manufactured": (),
    "domain-study": ("n_cells", "T", "tau"),
}


def parse_config_text(text: str, origin: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines into a raw string map, with line diagnostics."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{origin}:{lineno}: missing key before '='")
        if key in raw:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


def apply_env_overrides(raw: dict[str, str], environ=None) -> dict[str, str]:
    """Overlay HFLOW_<KEY> environment variables onto the raw key map."""
    env = os.environ if environ is None else environ
    merged = dict(raw)
    for key in _CONVERTERS:
        val = env.get(f"HFLOW_{key.upper()}")
        if val is not None:
            merged[key] = val
    return merged


def build_run_config(raw: dict[str, str]) -> RunConfig:
    """Convert, validate, and canonicalize a raw key map."""
    unknown = sorted(set(raw) - set(_CONVERTERS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    values = {key: _CONVERTERS[key](key, val) for key, val in raw.items()}
    for required in ("mode", "q", "x_max"):
        if required not in values:
            raise ConfigError(f"missing required key {required!r}")

    mode = values["mode"]
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}, expected one of {', '.join(MODES)}")
    for key in _MODE_REQUIRES[mode]:
        if key not in values:
            raise ConfigError(f"mode {mode!r} requires key {key!r}")

    try:
        rc = RunConfig(**values)
    except TypeError as exc:  # pragma: no cover - shielded by the unknown-key check
        raise ConfigError(str(exc)) from None

    rc = _resolve_defaults(rc)
    _validate_config(rc)
    return rc


def _resolve_defaults(rc: RunConfig) -> RunConfig:
    """Fill geometry-dependent defaults (bump centers default to the midpoint)."""
    updates = {}
    mid = 0.5 * (rc.x_min + rc.x_max)
    if rc.u0_center is None and rc.u0_kind in ("bump", "step"):
        updates["u0_center"] = mid
    if rc.g_center is None and rc.g_kind == "bump":
        updates["g_center"] = mid
    return replace(rc, **updates) if updates else rc


def _validate_config(rc: RunConfig) -> None:
    def bad(msg: str) -> ConfigError:
        return ConfigError(msg)

    if not (np.isfinite(rc.q) and rc.q > 0.0):
        raise bad(f"key 'q': must be positive, got {rc.q}")
    if not rc.x_max > rc.x_min:
        raise bad(f"keys 'x_min'/'x_max': need x_max > x_min, got [{rc.x_min}, {rc.x_max}]")
    if rc.n_cells is not None and rc.n_cells < 2:
        raise bad(f"key 'n_cells': need at least 2, got {rc.n_cells}")
    if rc.tau is not None and not rc.tau > 0.0:
        raise bad(f"key 'tau': must be positive, got {rc.tau}")
    if rc.T is not None and rc.tau is not None and rc.T < rc.tau:
        raise bad(f"keys 'T'/'tau': need T >= tau, got T={rc.T}, tau={rc.tau}")
    for e in rc.eps:
        if not (0.0 < e < 1.0):
            raise bad(f"key 'eps': values must lie in (0, 1), got {e}")
    if rc.mode == "solve-pep" and len(rc.eps) != 1:
        raise bad(f"mode 'solve-pep' needs exactly one eps value, got {len(rc.eps)}")
    if rc.mode == "sweep-eps":
        if len(rc.eps) < 4:
            raise bad(f"mode 'sweep-eps' needs at least 4 eps values, got {len(rc.eps)}")
        if np.log10(max(rc.eps) / min(rc.eps)) < 2.0 - 1.0e-9:
            raise bad("mode 'sweep-eps' needs eps values spanning at least two decades")
    if rc.u0_kind not in U0_KINDS:
        raise bad(f"key 'u0_kind': expected one of {', '.join(U0_KINDS)}, got {rc.u0_kind!r}")
    if rc.g_kind not in G_KINDS:
        raise bad(f"key 'g_kind': expected one of {', '.join(G_KINDS)}, got {rc.g_kind!r}")
    if rc.u0_kind in ("bump", "step") and not rc.u0_width > 0.0:
        raise bad(f"key 'u0_width': must be positive, got {rc.u0_width}")
    if rc.g_kind == "bump" and not rc.g_width > 0.0:
        raise bad(f"key 'g_width': must be positive, got {rc.g_width}")
    if rc.stride < 1:
        raise bad(f"key 'stride': must be >= 1, got {rc.stride}")
    if rc.threads < 1:
        raise bad(f"key 'threads': must be >= 1, got {rc.threads}")
    if not (0.0 < rc.newton_tol < 1.0):
        raise bad(f"key 'newton_tol': must lie in (0, 1), got {rc.newton_tol}")
    if rc.newton_max_iters < 1:
        raise bad(f"key 'newton_max_iters': must be >= 1, got {rc.newton_max_iters}")
    if rc.slack < 0.0:
        raise bad(f"key 'slack': must be >= 0, got {rc.slack}")
    if rc.mode == "manufactured":
        if len(rc.mm_ns) < 2:
            raise bad("key 'mm_ns': need at least 2 grid sizes")
        if len(rc.mm_taus) < 2:
            raise bad("key 'mm_taus': need at least 2 step sizes")


def config_text(rc: RunConfig) -> str:
    """Serialize a RunConfig so that parsing the text reproduces it exactly."""
    lines = []
    for f in fields(rc):
        val = getattr(rc, f.name)
        if val is None:
            continue
        if isinstance(val, bool):
            s = "true" if val else "false"
        elif isinstance(val, tuple):
            s = ", ".join(repr(v) for v in val)
        elif isinstance(val, float):
            s = repr(val)
        else:
            s = str(val)
        lines.append(f"{f.name} = {s}")
    return "\n".join(lines) + "\n"


# -- model assembly -------------------------------------------------------------------


def _build_u0(rc: RunConfig):
    if rc.u0_kind == "constant":
        return constant_profile(rc.u0_value)
    if rc.u0_kind == "bump":
        return gaussian_bump(rc.u0_center, rc.u0_width, rc.u0_amplitude)
    return smoothed_step(rc.u0_center, rc.u0_width, rc.u0_lo, rc.u0_hi)


def _build_g(rc: RunConfig):
    if rc.g_kind == "zero":
        return None
    if rc.g_kind == "constant":
        return static_source(constant_profile(rc.g_value))
    return static_source(gaussian_bump(rc.g_center, rc.g_width, rc.g_amplitude))


def _build_spec(rc: RunConfig, eps: float = 0.0) -> ModelSpec:
    grid = Grid(rc.x_min, rc.x_max, rc.n_cells)
    try:
        return ModelSpec(
            beta=PowerLawBeta(rc.q),
            grid=grid,
            T=rc.T,
            tau=rc.tau,
            u0=_build_u0(rc),
            g=_build_g(rc),
            eps=eps,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _newton_settings(rc: RunConfig) -> NewtonSettings:
    return NewtonSettings(tol_residual=rc.newton_tol, max_iters=rc.newton_max_iters)


# -- CSV emission ---------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_lines(path: Path, lines) -> None:
    with open(path, "w", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def emit_trajectory(path: Path, traj: Trajectory, grid: Grid, stride: int) -> None:
    """trajectory.csv: t,node_index,x,u,mu for every stride-th frame plus the final one."""
    m = traj.n_steps
    frames = list(range(0, m + 1, stride))
    if frames[-1] != m:
        frames.append(m)
    lines = ["t,node_index,x,u,mu"]
    for n in frames:
        t = traj.times[n]
        for i in range(grid.n_nodes):
            lines.append(
                f"{_fmt(t)},{i},{_fmt(grid.nodes[i])},"
                f"{_fmt(traj.states[n, i])},{_fmt(traj.chem_potentials[n, i])}"
            )
    _write_lines(path, lines)


def emit_report(path: Path, checks: list[CheckRecord]) -> None:
    """report.csv: check,t_or_eps,lhs,rhs,margin,pass - one row per check sample."""
    lines = ["check,t_or_eps,lhs,rhs,margin,pass"]
    for check in checks:
        margins = check.margins
        sample_ok = check.sample_passed
        for k in range(len(check.at)):
            ok = "true" if sample_ok[k] else "false"
            lines.append(
                f"{check.name},{_fmt(check.at[k])},{_fmt(check.lhs[k])},"
                f"{_fmt(check.rhs[k])},{_fmt(margins[k])},{ok}"
            )
    _write_lines(path, lines)


def emit_rates(path: Path, result: SweepResult) -> None:
    """rates.csv: eps,functional,slope_global,intercept - one row per sweep point."""
    lines = ["eps,functional,slope_global,intercept"]
    for entry in result.entries:
        lines.append(
            f"{_fmt(entry.eps)},{_fmt(entry.functional)},"
            f"{_fmt(result.rate.slope)},{_fmt(result.rate.intercept)}"
        )
    _write_lines(path, lines)


def emit_convergence(path: Path, studies: dict) -> None:
    """convergence.csv: study,parameter,error for each refinement point."""
    lines = ["study,parameter,error"]
    for name, study in studies.items():
        for p, e in zip(study.parameters, study.errors):
            lines.append(f"{name},{_fmt(p)},{_fmt(e)}")
    _write_lines(path, lines)


# -- mode runners ---------------------------------------------------------------------


def _prepare_out(rc: RunConfig) -> Path:
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved.cfg").write_text(config_text(rc))
    return out


def _run_solve(rc: RunConfig) -> int:
    regularized = rc.mode == "solve-pep"
    eps = rc.eps[0] if regularized else 0.0
    spec = _build_spec(rc, eps=eps)
    ops = build_operators(spec.grid)
    if regularized and rc.resolvent_init:
        u0e = resolvent_initialize(ops, initial_field(spec.grid, spec.u0), eps)
        spec = replace(spec, u0=u0e)
    out = _prepare_out(rc)
    traj = integrate(ops, spec, _newton_settings(rc))
    emit_trajectory(out / "trajectory.csv", traj, spec.grid, rc.stride)
    print(f"wrote {out / 'trajectory.csv'} ({traj.n_steps} steps)")
    return EXIT_OK


def _run_verify(rc: RunConfig) -> int:
    spec = _build_spec(rc, eps=0.0)
    ops = build_operators(spec.grid)
    out = _prepare_out(rc)
    report = verify_spec(
        ops,
        spec,
        eps_values=rc.eps,
        slack=rc.slack,
        settings=_newton_settings(rc),
        threads=rc.threads,
    )
    emit_report(out / "report.csv", report.checks)
    for check in report.checks:
        status = "pass" if check.passed else "FAIL"
        print(f"{status}  {check.name}  worst margin {check.worst_margin:+.3e}")
    if not report.all_passed:
        names = ", ".join(c.name for c in report.failed_checks())
        print(f"failed checks: {names}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def _run_sweep(rc: RunConfig) -> int:
    spec = _build_spec(rc, eps=0.0)
    ops = build_operators(spec.grid)
    out = _prepare_out(rc)
    try:
        result = eps_sweep(
            ops, spec, rc.eps, settings=_newton_settings(rc), threads=rc.threads
        )
    except ValueError as exc:
        print(f"sweep failed: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    emit_rates(out / "rates.csv", result)
    rate = result.rate
    print(
        f"rate fit: slope {rate.slope:.4f}, intercept {rate.intercept:.4f}, "
        f"residual {rate.residual:.4f} (thresholds: slope >= {rc.slope_min}, "
        f"residual <= {rc.residual_max})"
    )
    ok = rate.slope >= rc.slope_min and rate.residual <= rc.residual_max
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _run_manufactured(rc: RunConfig) -> int:
    beta = PowerLawBeta(rc.q)
    profile = rc.mm_profile or neumann_cosine_profile(rc.x_min, rc.x_max)
    settings = _newton_settings(rc)
    out = _prepare_out(rc)
    try:
        spatial = spatial_study(
            beta, profile, rc.x_min, rc.x_max, rc.mm_ns,
            rc.mm_spatial_t, rc.mm_spatial_tau, settings,
        )
        temporal = temporal_study(
            beta, profile, rc.x_min, rc.x_max, rc.mm_temporal_n,
            rc.mm_temporal_t, rc.mm_taus, settings,
        )
    except ValueError as exc:
        raise ConfigError(f"manufactured study: {exc}") from None
    emit_convergence(out / "convergence.csv", {"spatial": spatial, "temporal": temporal})
    checks = [
        CheckRecord(
            name="spatial-order-shortfall",
            at=np.array([spatial.parameters[-1]]),
            lhs=np.array([rc.mm_spatial_order_min - spatial.order]),
            rhs=np.array([0.0]),
            slack=0.0,
        ),
        CheckRecord(
            name="temporal-order-window",
            at=np.array([temporal.parameters[-1]]),
            lhs=np.array([
                abs(temporal.order - 0.5 * (rc.mm_temporal_order_lo + rc.mm_temporal_order_hi))
                - 0.5 * (rc.mm_temporal_order_hi - rc.mm_temporal_order_lo)
            ]),
            rhs=np.array([0.0]),
            slack=0.0,
        ),
    ]
    emit_report(out / "report.csv", checks)
    print(f"spatial order {spatial.order:.3f} (need >= {rc.mm_spatial_order_min})")
    print(
        f"temporal order {temporal.order:.3f} "
        f"(need in [{rc.mm_temporal_order_lo}, {rc.mm_temporal_order_hi}])"
    )
    return EXIT_OK if all(c.passed for c in checks) else EXIT_CHECK_FAILED


def _run_domain_study(rc: RunConfig) -> int:
    eps = rc.eps[0] if rc.eps else 0.0
    spec = _build_spec(rc, eps=eps)
    out = _prepare_out(rc)
    record = domain_doubling_study(spec, settings=_newton_settings(rc))
    if not record.valid:
        print(f"domain study invalid: {record.reason}", file=sys.stderr)
        return EXIT_CONFIG
    check = CheckRecord(
        name="domain-doubling",
        at=np.array([spec.T]),
        lhs=np.array([record.difference]),
        rhs=np.array([rc.diff_max]),
        slack=0.0,
    )
    emit_report(out / "report.csv", [check])
    print(
        f"domain doubling difference {record.difference:.3e} "
        f"(sup {record.sup_difference:.3e}, threshold {rc.diff_max:g})"
    )
    return EXIT_OK if check.passed else EXIT_CHECK_FAILED


_RUNNERS = {
    "solve-p": _run_solve,
    "solve-pep": _run_solve,
    "verify": _run_verify,
    "sweep-eps": _run_sweep,
    "manufactured": _run_manufactured,
    "domain-study": _run_domain_study,
}


def run(rc: RunConfig) -> int:
    """Dispatch one validated configuration; returns the process exit code."""
    try:
        return _RUNNERS[rc.mode](rc)
    except StepFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def load_config(path: str, overrides: dict | None = None, environ=None) -> RunConfig:
    """Read, env-override, and validate a config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    raw = apply_env_overrides(parse_config_text(text, origin=path), environ)
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    return build_run_config(raw)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hflow",
        description="Backward-Euler solvers and verification studies for "
        "porous-medium / fast-diffusion problems and their regularization.",
    )
    parser.add_argument("--config", required=True, help="path to a key = value config file")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--stride", type=int, help="trajectory output stride (overrides config)")
    parser.add_argument("--threads", type=int, help="worker threads for sweeps (overrides config)")
    args = parser.parse_args(argv)

    overrides = {
        "out": args.out,
        "stride": None if args.stride is None else str(args.stride),
        "threads": None if args.threads is None else str(args.threads),
    }
    try:
        rc = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(rc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
