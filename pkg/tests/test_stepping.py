"""Time-stepper oracles and exact per-step invariants.

The strongest oracle here is exact: with spatially constant data the stiffness
term vanishes, both steppers reduce to the scalar update u_{n+1} = R_tau(u_n +
tau*g) with R the resolvent of beta, and the recorded trajectory must match that
resolvent iteration node for node. An adaptive RK4 integration of the same
scalar ODE then pins the first-order accuracy of the backward-Euler chain.
Beyond that, every recorded frame is checked against the weak form of its step
equation, and the structural invariants (mass balance, dual-norm contraction of
the step map, energy dissipation, the increment/potential duality identity) are
verified on rough random data.
"""

import numpy as np
import pytest

from hflow.grid import Grid, build_operators
from hflow.nonlinearity import PiEps, PowerLawBeta
from hflow.problems import ModelSpec, forcing_potential, resolvent_initialize
from hflow.stepping import (
    DEFAULT_NEWTON,
    NewtonSettings,
    StepFailure,
    Trajectory,
    chemical_potential_p,
    chemical_potential_pep,
    integrate,
    residual_norm,
    step_p,
    step_pep,
)


@pytest.fixture(scope="module")
def ops():
    return build_operators(Grid(x_min=0.0, x_max=1.0, n_cells=24))


def _amplified_tol(tol: float, ops) -> float:
    # a weak residual of W-weighted norm <= tol moves nodal values by at most
    # ~tol/sqrt(w_min); used to translate Newton's tolerance into state error
    return tol / np.sqrt(np.min(ops.weights))


class TestNewtonSettings:
    def test_defaults(self):
        assert DEFAULT_NEWTON == NewtonSettings()
        assert DEFAULT_NEWTON.tol_residual == 1e-10
        assert DEFAULT_NEWTON.max_iters == 50

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"tol_residual": 0.0},
            {"tol_residual": 1.0},
            {"max_iters": 0},
            {"damping": 0.0},
            {"damping": 1.0},
            {"min_step": 0.0},
            {"min_step": 2.0},
        ],
    )
    def test_rejects_bad_settings(self, kwargs):
        with pytest.raises(ValueError):
            NewtonSettings(**kwargs)


class TestResidualNorm:
    def test_hand_computed(self, ops):
        r = np.zeros(ops.grid.n_nodes)
        r[0] = 2.0  # end weight is h/2
        expected = np.sqrt(4.0 / (ops.grid.h / 2.0))
        assert residual_norm(ops, r) == pytest.approx(expected, rel=1e-14)


class TestScalarReduction:
    """Constant-in-space runs collapse to the scalar ODE u' + beta(u) = g."""

    @pytest.mark.parametrize("eps", [0.0, 0.25])
    def test_matches_resolvent_iteration(self, ops, eps):
        beta = PowerLawBeta(3.0)
        g_val, u_val, tau, m = 1.3, 2.0, 0.05, 8
        spec = ModelSpec(
            beta=beta,
            grid=ops.grid,
            T=tau * m,
            tau=tau,
            u0=u_val,
            g=np.full(ops.grid.n_nodes, g_val),
            eps=eps,
        )
        traj = integrate(ops, spec)
        tol = _amplified_tol(DEFAULT_NEWTON.tol_residual, ops)
        s = u_val
        for n in range(1, m + 1):
            s = beta.resolvent(tau, s + tau * g_val)
            frame = traj.states[n]
            assert np.max(np.abs(frame - s)) < 10.0 * tol
            assert np.max(frame) - np.min(frame) < 10.0 * tol  # stays constant

    def test_first_order_against_adaptive_rk4(self, ops):
        # reference solution of u' = g - beta(u) by RK4 with step doubling
        beta = PowerLawBeta(3.0)
        g_val, u_val, horizon = 1.3, 2.0, 0.4

        def rhs(u):
            return g_val - float(beta.value(u))

        def rk4(u, h):
            k1 = rhs(u)
            k2 = rhs(u + 0.5 * h * k1)
            k3 = rhs(u + 0.5 * h * k2)
            k4 = rhs(u + h * k3)
            return u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        def reference(t_end, n0=8):
            n = n0
            prev = None
            while True:
                u, h = u_val, t_end / n
                for _ in range(n):
                    u = rk4(u, h)
                if prev is not None and abs(u - prev) < 1e-12 * (1.0 + abs(u)):
                    return u
                prev, n = u, 2 * n
                assert n <= 2**22, "reference integration failed to settle"

        u_star = reference(horizon)
        errors = []
        for m in (16, 32, 64, 128):
            spec = ModelSpec(
                beta=beta,
                grid=ops.grid,
                T=horizon,
                tau=horizon / m,
                u0=u_val,
                g=np.full(ops.grid.n_nodes, g_val),
            )
            final = integrate(ops, spec).final_state
            errors.append(abs(float(final[0]) - u_star))
        ratios = [a / b for a, b in zip(errors, errors[1:])]
        assert all(1.8 < r < 2.2 for r in ratios), (errors, ratios)


class TestStationaryStates:
    def test_unregularized_fixed_point_is_bit_exact(self, ops):
        # beta(1) = 2 for q = 3, so constant g = 2 makes u = 1 stationary
        beta = PowerLawBeta(3.0)
        u_star = np.ones(ops.grid.n_nodes)
        g = np.full(ops.grid.n_nodes, 2.0)
        out = step_p(ops, beta, u_star, g, tau=0.1)
        assert np.array_equal(out, u_star)
        spec = ModelSpec(beta=beta, grid=ops.grid, T=1.0, tau=0.1, u0=u_star, g=g)
        traj = integrate(ops, spec)
        assert all(np.array_equal(traj.states[n], u_star) for n in range(11))

    def test_regularized_fixed_point_is_bit_exact(self, ops):
        # the same state: mu = eps*u + beta(u) - eps*u - f vanishes when f = beta(u)
        beta = PowerLawBeta(3.0)
        u_star = np.ones(ops.grid.n_nodes)
        g = np.full(ops.grid.n_nodes, 2.0)
        spec = ModelSpec(
            beta=beta, grid=ops.grid, T=1.0, tau=0.1, u0=u_star, g=g, eps=0.3
        )
        traj = integrate(ops, spec)
        assert traj.kind == "pep"
        assert all(np.array_equal(traj.states[n], u_star) for n in range(11))
        # mu vanishes up to the rounding noise of the forcing-potential solve
        assert np.max(np.abs(traj.chem_potentials[-1])) < 1e-11


def _random_spec(ops, rng, *, eps=0.0, with_source=True, q=3.0, m=6, tau=0.02):
    u0 = rng.uniform(-1.5, 1.5, ops.grid.n_nodes)
    g = rng.uniform(-1.0, 1.0, ops.grid.n_nodes) if with_source else None
    return ModelSpec(
        beta=PowerLawBeta(q),
        grid=ops.grid,
        T=tau * m,
        tau=tau,
        u0=u0,
        g=g,
        eps=eps,
    )


class TestRecordedFramesSolveTheirStepEquations:
    """Re-assemble the weak residual of every recorded step from scratch."""

    @pytest.mark.parametrize("eps", [0.0, 0.1])
    def test_static_source(self, ops, eps):
        rng = np.random.default_rng(3)
        spec = _random_spec(ops, rng, eps=eps)
        traj = integrate(ops, spec)
        self._check_all_frames(ops, spec, traj)

    @pytest.mark.parametrize("eps", [0.0, 0.1])
    def test_time_dependent_source(self, ops, eps):
        spec = ModelSpec(
            beta=PowerLawBeta(3.0),
            grid=ops.grid,
            T=0.12,
            tau=0.02,
            u0=lambda x: np.cos(np.pi * x),
            g=lambda x, t: np.sin(3.0 * t) * np.cos(np.pi * x) + t,
            eps=eps,
        )
        traj = integrate(ops, spec)
        self._check_all_frames(ops, spec, traj)

    @staticmethod
    def _check_all_frames(ops, spec, traj):
        from hflow.problems import source_at

        w = ops.weights
        pi = PiEps(spec.eps) if spec.regularized else None
        for n in range(traj.n_steps):
            t_next = float(traj.times[n + 1])
            g_next = source_at(ops.grid, spec.g, t_next)
            f_next = forcing_potential(ops, g_next)
            u_prev, u_next = traj.states[n], traj.states[n + 1]
            if traj.kind == "p":
                r = (
                    w * (u_next - u_prev) / spec.tau
                    + ops.apply_sw(spec.beta.value(u_next))
                    - w * g_next
                )
                mu = chemical_potential_p(spec.beta, u_next, f_next)
            else:
                mu = chemical_potential_pep(ops, spec.beta, pi, u_next, f_next)
                r = w * (u_next - u_prev) / spec.tau + ops.apply_sw(mu)
            assert residual_norm(ops, r) <= 2.0 * DEFAULT_NEWTON.tol_residual
            np.testing.assert_allclose(
                traj.chem_potentials[n + 1], mu, rtol=1e-12, atol=1e-12
            )
            np.testing.assert_array_equal(
                traj.increments[n], (u_next - u_prev) / spec.tau
            )


class TestExactInvariants:
    def test_mass_balance_every_step(self, ops):
        # summing the weak form against 1 kills S, and (f, 1)_H = (g, 1)_H by the
        # forcing-potential equation, leaving (du, 1)_H + tau*(mu, 1)_V = 0
        rng = np.random.default_rng(5)
        one = np.ones(ops.grid.n_nodes)
        for eps in (0.0, 0.2):
            spec = _random_spec(ops, rng, eps=eps)
            traj = integrate(ops, spec)
            for n in range(traj.n_steps):
                du = traj.states[n + 1] - traj.states[n]
                mu_mass = ops.inner_v(traj.chem_potentials[n + 1], one)
                balance = ops.inner_h(du, one) + spec.tau * mu_mass
                assert abs(balance) < 1e-9

    @pytest.mark.parametrize("eps", [0.0, 0.15])
    def test_step_map_contracts_in_dual_norm(self, ops, eps):
        rng = np.random.default_rng(8)
        beta = PowerLawBeta(3.0)
        pi = PiEps(eps) if eps > 0.0 else None
        g = rng.uniform(-1.0, 1.0, ops.grid.n_nodes)
        f = forcing_potential(ops, g)
        tau = 0.04
        for _ in range(10):
            u = rng.uniform(-2.0, 2.0, ops.grid.n_nodes)
            v = rng.uniform(-2.0, 2.0, ops.grid.n_nodes)
            if eps == 0.0:
                su = step_p(ops, beta, u, g, tau)
                sv = step_p(ops, beta, v, g, tau)
            else:
                su, _ = step_pep(ops, beta, pi, u, f, tau)
                sv, _ = step_pep(ops, beta, pi, v, f, tau)
            before = ops.norm_dual(u - v)
            after = ops.norm_dual(su - sv)
            assert after <= before * (1.0 + 1e-9) + 1e-9

    def test_energy_decreases_without_forcing(self, ops):
        rng = np.random.default_rng(13)
        for eps in (0.0, 0.3):
            spec = _random_spec(ops, rng, eps=eps, with_source=False)
            traj = integrate(ops, spec)
            pi = PiEps(eps) if eps > 0.0 else None

            def energy(u):
                e = ops.inner_h(spec.beta.potential(u), np.ones_like(u))
                if pi is not None:
                    e += 0.5 * eps * ops.inner_v(u, u)
                    e += ops.inner_h(pi.potential(u), np.ones_like(u))
                return e

            energies = [energy(traj.states[n]) for n in range(traj.n_steps + 1)]
            for e_prev, e_next in zip(energies, energies[1:]):
                assert e_next <= e_prev + 1e-9 * (1.0 + abs(e_prev))

    def test_increment_potential_duality_identity(self, ops):
        # W*du/tau = -(S+W) mu pairs the two norms: |du/tau|_{V*} = |mu|_V
        rng = np.random.default_rng(21)
        for eps in (0.0, 0.2):
            spec = _random_spec(ops, rng, eps=eps)
            traj = integrate(ops, spec)
            for n in range(traj.n_steps):
                lhs = ops.norm_dual(traj.increments[n])
                mu = traj.chem_potentials[n + 1]
                rhs = np.sqrt(ops.inner_v(mu, mu))
                assert lhs == pytest.approx(rhs, rel=1e-7, abs=1e-8)


class TestFailureReporting:
    def test_impossible_budget_raises_annotated_failure(self, ops):
        spec = ModelSpec(
            beta=PowerLawBeta(3.0),
            grid=ops.grid,
            T=0.5,
            tau=0.25,
            u0=lambda x: 4.0 + 3.0 * np.cos(np.pi * x),
        )
        settings = NewtonSettings(max_iters=1)
        with pytest.raises(StepFailure) as excinfo:
            integrate(ops, spec, settings)
        err = excinfo.value
        assert err.step_index == 0
        assert err.residual > 0.0
        assert err.iterations >= 1
        assert "step 1/2" in str(err)

    def test_direct_step_failure_has_no_index(self, ops):
        with pytest.raises(StepFailure) as excinfo:
            step_p(
                ops,
                PowerLawBeta(3.0),
                4.0 * np.ones(ops.grid.n_nodes),
                np.zeros(ops.grid.n_nodes),
                tau=0.5,
                settings=NewtonSettings(max_iters=1),
            )
        assert excinfo.value.step_index is None


class TestTrajectoryBookkeeping:
    def test_shapes_flags_and_fields(self, ops):
        rng = np.random.default_rng(2)
        spec = _random_spec(ops, rng, eps=0.1, m=5)
        traj = integrate(ops, spec)
        n = ops.grid.n_nodes
        assert isinstance(traj, Trajectory)
        assert traj.times.shape == (6,)
        assert traj.states.shape == (6, n)
        assert traj.chem_potentials.shape == (6, n)
        assert traj.increments.shape == (5, n)
        assert traj.n_steps == 5
        assert traj.kind == "pep" and traj.eps == 0.1
        assert np.array_equal(traj.final_state, traj.states[-1])
        for arr in (traj.times, traj.states, traj.chem_potentials, traj.increments):
            assert not arr.flags.writeable
        np.testing.assert_array_equal(traj.times, np.linspace(0.0, spec.T, 6))

    def test_static_and_callable_sources_agree(self, ops):
        base = np.cos(2.0 * ops.grid.nodes) + 0.5
        common = dict(
            beta=PowerLawBeta(3.0),
            grid=ops.grid,
            T=0.1,
            tau=0.02,
            u0=lambda x: np.sin(x),
        )
        t_static = integrate(ops, ModelSpec(g=base, **common))
        t_callable = integrate(
            ops, ModelSpec(g=lambda x, t: np.cos(2.0 * x) + 0.5, **common)
        )
        assert np.array_equal(t_static.states, t_callable.states)
        assert np.array_equal(t_static.chem_potentials, t_callable.chem_potentials)

    def test_initial_state_is_used_verbatim(self, ops):
        # no hidden smoothing: frame 0 is the supplied data even when eps > 0
        u0 = np.cos(3.0 * ops.grid.nodes)
        spec = ModelSpec(
            beta=PowerLawBeta(3.0), grid=ops.grid, T=0.04, tau=0.02, u0=u0, eps=0.2
        )
        traj = integrate(ops, spec)
        assert np.array_equal(traj.states[0], u0)
        smoothed = resolvent_initialize(ops, u0, 0.2)
        traj2 = integrate(
            ops,
            ModelSpec(
                beta=spec.beta, grid=ops.grid, T=0.04, tau=0.02, u0=smoothed, eps=0.2
            ),
        )
        assert np.array_equal(traj2.states[0], smoothed)
