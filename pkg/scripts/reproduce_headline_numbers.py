#!/usr/bin/env python3
"""Recompute the headline verification numbers through the library API.

Prints, in order: the regularization-error rate fit, the manufactured-solution
convergence orders, the domain-doubling difference, the worst
resolvent-initialization margin, and the Yosida approximation gap. These are
the same quantities the acceptance tests pin, so the output should match
tests/test_acceptance.py up to run-to-run float noise (there is none: every
computation here is deterministic).
"""

import time

import numpy as np

from hflow.grid import Grid, build_operators
from hflow.nonlinearity import PowerLawBeta
from hflow.problems import ModelSpec, gaussian_bump, neumann_cosine_profile
from hflow.verification import (
    check_resolvent_init,
    domain_doubling_study,
    eps_sweep,
    spatial_study,
    temporal_study,
)


def timed(label, fn):
    t0 = time.perf_counter()
    result = fn()
    print(f"  [{time.perf_counter() - t0:.1f}s] {label}")
    return result


def main():
    beta = PowerLawBeta(q=3.0)

    # Regularization-error sweep: J(eps) ~ C eps^slope, expect slope ~ 1.9.
    grid = Grid(0.0, 20.0, 512)
    ops = build_operators(grid)
    spec = ModelSpec(
        beta=beta, grid=grid, T=0.5, tau=1e-3,
        u0=gaussian_bump(10.0, 1.0, 1.0), eps=0.0,
    )
    sweep = timed(
        "eps sweep (5 values, 1e-3..1e-1)",
        lambda: eps_sweep(ops, spec, (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)),
    )
    print(f"rate fit: slope {sweep.rate.slope:.4f}, residual {sweep.rate.residual:.4f}")

    # Manufactured-solution orders: ~2 in h, ~1 in tau.
    profile = neumann_cosine_profile(0.0, 1.0)
    spatial = timed(
        "spatial refinement (n = 8..64)",
        lambda: spatial_study(beta, profile, 0.0, 1.0, (8, 16, 32, 64), 0.05, 2e-5),
    )
    temporal = timed(
        "temporal refinement (tau = 0.04..0.005)",
        lambda: temporal_study(
            beta, profile, 0.0, 1.0, 64, 0.4, (0.04, 0.02, 0.01, 0.005)
        ),
    )
    print(f"spatial order {spatial.order:.3f}, temporal order {temporal.order:.3f}")

    # Domain doubling: a bump far from the boundary should not notice the wall.
    d_grid = Grid(0.0, 20.0, 256)
    d_spec = ModelSpec(
        beta=beta, grid=d_grid, T=0.25, tau=5e-3,
        u0=gaussian_bump(10.0, 1.0, 1.0), eps=0.0,
    )
    record = timed("domain doubling", lambda: domain_doubling_study(d_spec))
    print(f"doubling difference {record.difference:.3e} (sup {record.sup_difference:.3e})")

    # Resolvent initialization bounds across eps; margins must stay >= 0.
    i_grid = Grid(0.0, 10.0, 128)
    i_ops = build_operators(i_grid)
    u0 = gaussian_bump(5.0, 1.0, 1.0)(i_grid.nodes)
    checks = check_resolvent_init(i_ops, beta, u0, (1e-1, 1e-2, 1e-3, 1e-4))
    worst = min(c.worst_margin for c in checks)
    print(f"resolvent-init worst margin {worst:+.3e} over {len(checks)} checks")

    # Yosida approximation: beta_lam -> beta pointwise as lam -> 0. Report the
    # worst relative gap so the steep tails (|beta(5)| = 130) don't dominate.
    rs = np.linspace(-5.0, 5.0, 100)
    lam = 1e-6
    gap = max(
        (abs(beta.value(r)) - abs(beta.yosida(lam, r))) / (1.0 + abs(beta.value(r)))
        for r in rs
    )
    print(f"yosida relative gap at lam={lam:g}: {gap:.3e}")


if __name__ == "__main__":
    main()
