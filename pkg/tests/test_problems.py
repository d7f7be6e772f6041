"""Problem-description oracles: spec validation, derived constants, smoothing, data.

The constants oracle is fully hand-computable: for u0 identically 1 on [0, 2] with
q = 3, the potential mass is sum_i w_i * (1/4 + 1/2) = 3/2, |u0|_H^2 = 2, and a
constant source c has forcing potential f identically c with |f|_V^2 = 2 c^2.
The manufactured-forcing test checks the symbolic derivative against plain central
finite differences, so the two derivations are independent.
"""

import numpy as np
import pytest

from hflow.grid import Grid, build_operators
from hflow.nonlinearity import PowerLawBeta
from hflow.problems import (
    ManufacturedCase,
    ModelSpec,
    compute_constants,
    constant_profile,
    forcing_potential,
    gaussian_bump,
    initial_field,
    manufactured_case,
    neumann_cosine_profile,
    resolvent_initialize,
    smoothed_step,
    source_at,
    source_is_static,
    static_source,
)


@pytest.fixture(scope="module")
def grid():
    return Grid(x_min=0.0, x_max=2.0, n_cells=16)


@pytest.fixture(scope="module")
def ops(grid):
    return build_operators(grid)


class TestModelSpec:
    def _spec(self, grid, **overrides):
        kwargs = dict(
            beta=PowerLawBeta(3.0), grid=grid, T=0.1, tau=0.01, u0=1.0
        )
        kwargs.update(overrides)
        return ModelSpec(**kwargs)

    def test_accepts_well_formed(self, grid):
        spec = self._spec(grid)
        assert spec.n_steps == 10
        assert not spec.regularized
        assert self._spec(grid, eps=0.5).regularized

    @pytest.mark.parametrize("tau", [0.0, -0.01, np.nan, np.inf])
    def test_rejects_bad_tau(self, grid, tau):
        with pytest.raises(ValueError, match="tau"):
            self._spec(grid, tau=tau)

    def test_rejects_horizon_below_one_step(self, grid):
        with pytest.raises(ValueError, match="T"):
            self._spec(grid, T=0.005, tau=0.01)

    @pytest.mark.parametrize("eps", [-0.1, 1.0, 1.5])
    def test_rejects_eps_outside_unit_interval(self, grid, eps):
        with pytest.raises(ValueError, match="eps"):
            self._spec(grid, eps=eps)

    def test_rejects_non_integer_step_count(self, grid):
        with pytest.raises(ValueError, match="integer step count"):
            self._spec(grid, T=0.1, tau=0.03)

    def test_rejects_wrong_shape_arrays(self, grid):
        with pytest.raises(ValueError, match="u0 array"):
            self._spec(grid, u0=np.ones(grid.n_nodes + 1))
        with pytest.raises(ValueError, match="g array"):
            self._spec(grid, g=np.ones(3))


class TestDataNormalization:
    def test_initial_field_forms(self, grid):
        n = grid.n_nodes
        np.testing.assert_array_equal(initial_field(grid, 2.5), np.full(n, 2.5))
        arr = np.linspace(0.0, 1.0, n)
        out = initial_field(grid, arr)
        np.testing.assert_array_equal(out, arr)
        assert out is not arr  # defensive copy
        np.testing.assert_allclose(
            initial_field(grid, lambda x: x**2), grid.nodes**2
        )

    def test_initial_field_rejects_bad_data(self, grid):
        with pytest.raises(ValueError, match="shape"):
            initial_field(grid, np.ones(2))
        with pytest.raises(ValueError, match="non-finite"):
            initial_field(grid, lambda x: np.full_like(x, np.nan))

    def test_source_at_forms(self, grid):
        n = grid.n_nodes
        np.testing.assert_array_equal(source_at(grid, None, 0.3), np.zeros(n))
        fixed = np.full(n, 1.5)
        np.testing.assert_array_equal(source_at(grid, fixed, 0.3), fixed)
        np.testing.assert_allclose(
            source_at(grid, lambda x, t: t * x, 2.0), 2.0 * grid.nodes
        )
        # a scalar-returning callable broadcasts to the grid
        np.testing.assert_array_equal(
            source_at(grid, lambda x, t: np.float64(t), 0.25), np.full(n, 0.25)
        )

    def test_source_at_rejects_bad_data(self, grid):
        with pytest.raises(ValueError, match="shape"):
            source_at(grid, lambda x, t: np.ones(3), 0.0)
        with pytest.raises(ValueError, match="non-finite"):
            source_at(grid, lambda x, t: np.full_like(x, np.inf), 0.0)

    def test_source_is_static(self, grid):
        assert source_is_static(None)
        assert source_is_static(np.zeros(grid.n_nodes))
        assert not source_is_static(lambda x, t: x)


class TestForcingPotential:
    def test_constant_source_passes_through(self, ops):
        # S annihilates constants, so (S + W) f = W c gives f = c exactly
        g = np.full(ops.grid.n_nodes, 0.5)
        np.testing.assert_allclose(forcing_potential(ops, g), g, atol=1e-14)

    def test_solves_the_defining_system(self, ops):
        rng = np.random.default_rng(7)
        g = rng.standard_normal(ops.grid.n_nodes)
        f = forcing_potential(ops, g)
        residual = ops.apply_sw(f) - ops.weights * g
        assert np.max(np.abs(residual)) < 1e-12


class TestDerivedConstants:
    def test_hand_computed_case(self, ops):
        # u0 = 1, q = 3 on [0, 2]: potential mass 3/2, |u0|_H^2 = 2, c3 = 2;
        # g = 1/2 gives f = 1/2, |f|_V^2 = 1/2, F2 = T * 1/2 = 0.05 over T = 0.1
        spec = ModelSpec(
            beta=PowerLawBeta(3.0),
            grid=ops.grid,
            T=0.1,
            tau=0.01,
            u0=1.0,
            g=np.full(ops.grid.n_nodes, 0.5),
        )
        k = compute_constants(ops, spec)
        assert k.c1 == 0.5
        assert k.c2 == 0.0
        assert k.u0_h_sq == pytest.approx(2.0, rel=1e-14)
        assert k.u0_potential == pytest.approx(1.5, rel=1e-14)
        assert k.f_l2v_sq == pytest.approx(0.05, rel=1e-12)
        assert k.c3 == pytest.approx(2.0, rel=1e-14)
        assert k.M1 == pytest.approx(3.05, rel=1e-12)
        assert k.M2 == pytest.approx(6.05, rel=1e-12)
        assert k.m2_at(0.25) == pytest.approx(6.55, rel=1e-12)

    def test_static_shortcut_matches_time_dependent_path(self, ops):
        base = np.sin(ops.grid.nodes) + 2.0
        common = dict(
            beta=PowerLawBeta(2.0), grid=ops.grid, T=0.2, tau=0.025, u0=1.0
        )
        k_static = compute_constants(ops, ModelSpec(g=base, **common))
        k_callable = compute_constants(
            ops, ModelSpec(g=lambda x, t: np.sin(x) + 2.0, **common)
        )
        assert k_callable.f_l2v_sq == pytest.approx(k_static.f_l2v_sq, rel=1e-12)

    def test_smoothed_data_enters_c3_only_when_it_dominates(self, ops):
        # for constant u0 the smoothed seminorm term eps*|v|_V^2 = 2 eps/(1+eps)^2
        # stays below |u0|_H^2 = 2, so c3 is unchanged by the eps list
        spec = ModelSpec(
            beta=PowerLawBeta(3.0), grid=ops.grid, T=0.1, tau=0.01, u0=1.0
        )
        k0 = compute_constants(ops, spec)
        k1 = compute_constants(ops, spec, eps_values=[0.5, 0.25])
        assert k1.c3 == k0.c3 == pytest.approx(2.0, rel=1e-14)

    def test_regularized_spec_defaults_its_own_eps(self, ops):
        # a spiky u0 makes the smoothed seminorm term the maximizer in c3
        u0 = np.zeros(ops.grid.n_nodes)
        u0[ops.grid.n_nodes // 2] = 40.0
        spec = ModelSpec(
            beta=PowerLawBeta(3.0),
            grid=ops.grid,
            T=0.1,
            tau=0.01,
            u0=u0,
            eps=0.5,
        )
        k = compute_constants(ops, spec)
        v = resolvent_initialize(ops, u0, 0.5)
        expected = max(
            ops.inner_h(u0, u0),
            ops.mean_weighted(spec.beta.potential(u0)),
            0.5 * ops.inner_v(v, v),
        )
        assert k.c3 == pytest.approx(expected, rel=1e-12)
        assert k.c3 > ops.inner_h(u0, u0)


class TestResolventInitialize:
    def test_rejects_nonpositive_eps(self, ops):
        with pytest.raises(ValueError, match="eps"):
            resolvent_initialize(ops, np.ones(ops.grid.n_nodes), 0.0)

    def test_constant_data_scales_exactly(self, ops):
        # S kills constants, so (W + eps(S+W)) v = W u0 gives v = u0/(1+eps)
        v = resolvent_initialize(ops, np.full(ops.grid.n_nodes, 3.0), 0.5)
        np.testing.assert_allclose(v, np.full(ops.grid.n_nodes, 2.0), rtol=1e-13)

    def test_solves_the_defining_system(self, ops):
        rng = np.random.default_rng(11)
        u0 = rng.standard_normal(ops.grid.n_nodes)
        eps = 0.01
        v = resolvent_initialize(ops, u0, eps)
        residual = ops.weights * v + eps * ops.apply_sw(v) - ops.weights * u0
        assert np.max(np.abs(residual)) < 1e-12

    @pytest.mark.parametrize("eps", [1e-4, 1e-2, 0.5])
    def test_contraction_and_distance_bounds(self, ops, eps):
        # the four bounds the smoothing step is designed to satisfy, on rough data
        rng = np.random.default_rng(int(1.0 / eps))
        beta = PowerLawBeta(3.0)
        for _ in range(20):
            u0 = 3.0 * rng.standard_normal(ops.grid.n_nodes)
            v = resolvent_initialize(ops, u0, eps)
            tol = 1e-12 * (1.0 + ops.inner_h(u0, u0))
            assert ops.inner_h(v, v) <= ops.inner_h(u0, u0) + tol
            assert (
                ops.mean_weighted(beta.potential(v))
                <= ops.mean_weighted(beta.potential(u0)) + tol
            )
            assert eps * ops.inner_v(v, v) <= ops.inner_h(u0, u0) + tol
            assert ops.norm_dual(v - u0) ** 2 <= eps * ops.inner_h(u0, u0) + tol


class TestProfiles:
    def test_constant_profile(self):
        p = constant_profile(1.5)
        np.testing.assert_array_equal(p(np.zeros(4)), np.full(4, 1.5))

    def test_gaussian_bump(self):
        p = gaussian_bump(center=1.0, width=0.2, amplitude=3.0)
        x = np.array([1.0, 1.2, 0.8])
        vals = p(x)
        assert vals[0] == 3.0
        assert vals[1] == pytest.approx(3.0 * np.exp(-0.5), rel=1e-14)
        assert vals[2] == vals[1]  # symmetric about the center
        with pytest.raises(ValueError, match="width"):
            gaussian_bump(center=0.0, width=0.0)

    def test_smoothed_step(self):
        p = smoothed_step(center=0.5, width=0.05, lo=-1.0, hi=3.0)
        assert p(np.array([0.5]))[0] == pytest.approx(1.0, abs=1e-14)  # midpoint
        assert p(np.array([-10.0]))[0] == pytest.approx(-1.0, abs=1e-9)
        assert p(np.array([10.0]))[0] == pytest.approx(3.0, abs=1e-9)
        with pytest.raises(ValueError, match="width"):
            smoothed_step(center=0.0, width=-1.0)

    def test_static_source_ignores_time(self):
        src = static_source(gaussian_bump(center=0.0, width=1.0))
        x = np.linspace(-1.0, 1.0, 5)
        np.testing.assert_array_equal(src(x, 0.0), src(x, 17.3))


class TestManufactured:
    def test_forcing_matches_finite_differences(self, grid):
        # independent check of the symbolic derivative: compare g to
        # u_t - (beta(u))_xx + beta(u) computed by central differences
        beta = PowerLawBeta(3.0)
        expr = neumann_cosine_profile(grid.x_min, grid.x_max)
        case = manufactured_case(beta, expr, grid, t_max=0.5)
        x = np.linspace(0.3, 1.7, 9)
        dt, dx = 1e-5, 1e-4
        for t in (0.0, 0.2, 0.5):
            u_t = (case.u(x, t + dt) - case.u(x, t - dt)) / (2.0 * dt)

            def beta_u(xx, tt=t):
                return np.asarray(beta.value(case.u(xx, tt)), dtype=float)

            b_xx = (beta_u(x + dx) - 2.0 * beta_u(x) + beta_u(x - dx)) / dx**2
            expected = u_t - b_xx + beta_u(x)
            np.testing.assert_allclose(case.g(x, t), expected, rtol=1e-5, atol=1e-6)

    def test_exact_solution_evaluates_on_grid(self, grid):
        case = manufactured_case(
            PowerLawBeta(2.0), neumann_cosine_profile(grid.x_min, grid.x_max), grid
        )
        assert isinstance(case, ManufacturedCase)
        u0 = case.u_at(grid, 0.0)
        assert u0.shape == (grid.n_nodes,)
        # cos profile at t = 0: offset + cos(pi x / 2) on [0, 2]
        np.testing.assert_allclose(
            u0, 2.0 + np.cos(np.pi * grid.nodes / 2.0), rtol=1e-13
        )

    def test_time_independent_profile_broadcasts(self, grid):
        case = manufactured_case(PowerLawBeta(3.0), "2 + x/10", grid)
        g0 = case.g(grid.nodes, 0.0)
        assert g0.shape == (grid.n_nodes,)
        # u_t = 0 and (beta(u))_xx small but nonzero for the cubic term
        assert np.all(np.isfinite(g0))

    def test_rejects_profiles_that_touch_zero(self, grid):
        with pytest.raises(ValueError, match="positive"):
            manufactured_case(PowerLawBeta(3.0), "sin(pi*x/2)", grid)
        with pytest.raises(ValueError, match="positive"):
            manufactured_case(PowerLawBeta(3.0), "x - 1", grid)

    def test_rejects_near_zero_for_fast_diffusion(self, grid):
        # beta' blows up at 0 when q < 1, so near-zero profiles are refused
        with pytest.raises(ValueError, match="too close to zero"):
            manufactured_case(PowerLawBeta(0.5), "1e-9 + 0*x", grid)
        # the same profile is fine for q >= 1
        manufactured_case(PowerLawBeta(1.0), "1e-9 + 0*x", grid)

    def test_rejects_unknown_symbols(self, grid):
        with pytest.raises(ValueError, match="unknown symbols"):
            manufactured_case(PowerLawBeta(3.0), "a + x", grid)

    def test_neumann_profile_has_flat_ends(self):
        import sympy as sp

        x, t = sp.symbols("x t", real=True)
        expr = neumann_cosine_profile(0.25, 1.75, offset=3.0, amplitude=2.0)
        slope = sp.diff(expr, x)
        assert sp.simplify(slope.subs(x, 0.25)) == 0
        assert sp.simplify(slope.subs(x, sp.nsimplify(1.75))) == 0
        assert float(expr.subs({x: 0.25, t: 0})) == pytest.approx(5.0)

    def test_neumann_profile_rejects_sign_change(self):
        with pytest.raises(ValueError, match="amplitude"):
            neumann_cosine_profile(0.0, 1.0, offset=1.0, amplitude=1.0)
