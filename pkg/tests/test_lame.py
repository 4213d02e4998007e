import numpy as np
import pytest

from cnslab import fields as F
from cnslab import oracles
from cnslab.fields import GridSpec, ScalarField, VectorField
from cnslab.lame import apply_lame, decompose_velocity, divergence_form_source, estimate_b6_monitor, solve_lame
from cnslab.state import PhysParams, Scenario, make_scenario

TWO_PI = 2 * np.pi
PARAMS = PhysParams(mu=0.7, lam=0.4)


def random_vector(grid, seed, mean_zero=True):
    v = np.random.default_rng(seed).standard_normal((grid.dim,) + grid.shape)
    if mean_zero:
        v -= v.mean(axis=tuple(range(1, grid.dim + 1)), keepdims=True)
    return VectorField(grid, v)


class TestSolve:
    def test_zero_source(self):
        sol = solve_lame(VectorField.zeros(GridSpec(2, 8)), PARAMS)
        assert np.all(sol.v.values == 0) and sol.residual == 0 and not sol.mean_removed

    def test_gradient_source_closed_form(self):
        g = GridSpec(2, 32)
        x, _ = g.coords()
        f = F.gradient(ScalarField(g, np.sin(TWO_PI * x)))
        sol = solve_lame(f, PARAMS)
        # longitudinal mode: (2 mu + lam) k^2 v = f
        expected = np.cos(TWO_PI * x) / ((2 * PARAMS.mu + PARAMS.lam) * TWO_PI)
        np.testing.assert_allclose(sol.v.values[0], expected, atol=1e-13)
        assert np.max(np.abs(sol.v.values[1])) <= 1e-15
        assert np.max(np.abs(apply_lame(sol.v, PARAMS).values - f.values)) <= 1e-12

    @pytest.mark.parametrize("dim", [2, 3])
    def test_dense_oracle(self, dim):
        g = GridSpec(dim, 8)
        f = random_vector(g, dim)
        sol = solve_lame(f, PARAMS)
        ref = oracles.solve_lame(g, f.values, PARAMS.mu, PARAMS.lam)
        assert np.max(np.abs(sol.v.values - ref)) <= 1e-10
        assert sol.residual <= 1e-10

    @pytest.mark.parametrize("seed", range(5))
    def test_residual_on_rough_inputs(self, seed):
        g = GridSpec(2, 32)
        sol = solve_lame(random_vector(g, seed), PhysParams(mu=0.05, lam=-0.03))
        assert sol.residual <= 1e-10
        assert np.max(np.abs(sol.v.values.mean(axis=(1, 2)))) <= 1e-15

    def test_linearity(self):
        g = GridSpec(2, 16)
        f1, f2 = random_vector(g, 1), random_vector(g, 2)
        a, b = 1.5, -0.25
        lhs = solve_lame(f1 * a + f2 * b, PARAMS).v.values
        rhs = a * solve_lame(f1, PARAMS).v.values + b * solve_lame(f2, PARAMS).v.values
        assert np.max(np.abs(lhs - rhs)) <= 1e-12

    def test_mean_removed(self):
        g = GridSpec(2, 16)
        f = random_vector(g, 3, mean_zero=False)
        sol = solve_lame(f, PARAMS)
        assert sol.mean_removed and sol.residual <= 1e-10

    def test_rejects(self):
        g = GridSpec(2, 8)
        with pytest.raises(ValueError):
            solve_lame(VectorField.zeros(g), _Params(1.0, -2.5))
        with pytest.raises(ValueError):
            solve_lame(VectorField.zeros(g), _Params(0.0, 1.0))
        bad = VectorField.zeros(g).values.copy()
        bad[0, 0, 0] = np.inf
        with pytest.raises(F.NonFiniteError):
            solve_lame(VectorField(g, bad), PARAMS)


class _Params:
    """Duck-typed parameters that bypass PhysParams validation."""

    def __init__(self, mu, lam):
        self.mu, self.lam = mu, lam


class TestDecomposition:
    def test_rest(self):
        g = GridSpec(2, 16)
        s = make_scenario(Scenario("uniform"), g, PARAMS)
        dec = decompose_velocity(s)
        assert np.all(dec.v.values == 0) and np.all(dec.w.values == 0) and dec.residual == 0

    @pytest.mark.parametrize("seed", range(3))
    def test_w_equation(self, seed):
        g = GridSpec(2, 64)
        s = make_scenario(Scenario("manufactured", amplitude=0.3, seed=seed), g, PhysParams(mu=0.05, lam=0.01))
        dec = decompose_velocity(s)
        u = s.m.values / s.rho.values
        np.testing.assert_allclose(dec.v.values + dec.w.values, u, atol=1e-14)
        assert dec.residual <= 1e-6

    def test_v_solves_pressure_equation(self):
        g = GridSpec(2, 32)
        s = make_scenario(Scenario("manufactured", amplitude=0.3, seed=1), g, PARAMS)
        v = decompose_velocity(s).v
        np.testing.assert_allclose(-apply_lame(v, PARAMS).values, F.gradient(s.P).values, atol=1e-11)


class TestB6Monitor:
    def _single_mode(self, g, direction):
        x, y = g.coords()
        n = np.array([1.0, 0.0])
        a = n if direction == "longitudinal" else np.array([0.0, 1.0])
        phase = np.cos(TWO_PI * x)
        return np.einsum("i,j,...->ij...", a, n, phase)

    @pytest.mark.parametrize("direction,factor", [("longitudinal", "bulk"), ("transverse", "mu")])
    def test_single_mode_ratio(self, direction, factor):
        g = GridSpec(2, 32)
        gm = self._single_mode(g, direction)
        sol = solve_lame(divergence_form_source(gm, g), PARAMS)
        expected = 1 / (PARAMS.bulk if factor == "bulk" else PARAMS.mu)
        for r in (2.0, 4.0):
            assert estimate_b6_monitor(sol, gm, r).ratio == pytest.approx(expected, rel=1e-12)

    def test_zero(self):
        g = GridSpec(2, 8)
        zero = np.zeros((2, 2) + g.shape)
        sol = solve_lame(VectorField.zeros(g), PARAMS)
        assert estimate_b6_monitor(sol, zero).ratio == 0.0

    def test_inconsistent(self):
        g = GridSpec(2, 8)
        sol = solve_lame(random_vector(g, 0), PARAMS)
        with pytest.raises(ValueError):
            estimate_b6_monitor(sol, np.zeros((2, 2) + g.shape))

    @pytest.mark.parametrize("alpha", [3.0, -0.1])
    def test_scale_invariant(self, alpha):
        g = GridSpec(2, 16)
        gm = np.random.default_rng(0).standard_normal((2, 2) + g.shape)
        base = estimate_b6_monitor(solve_lame(divergence_form_source(gm, g), PARAMS), gm, 3.0)
        scaled = estimate_b6_monitor(solve_lame(divergence_form_source(alpha * gm, g), PARAMS), alpha * gm, 3.0)
        assert scaled.ratio == pytest.approx(base.ratio, rel=1e-12)
        assert "log_bound_constant" in scaled.rhs_components
