import math
from fractions import Fraction

import numpy as np
import pytest
import sympy

from cnslab import estimates as E
from cnslab import fields as F
from cnslab.diagnostics import make_record
from cnslab.fields import GridSpec, ScalarField, VectorField
from cnslab.state import PhysParams, Scenario, random_smooth, make_scenario

TWO_PI = 2 * np.pi


def smooth_vector(grid, seed):
    rng = np.random.default_rng(seed)
    return VectorField(grid, np.array([random_smooth(grid, rng, 4, 0.35) for _ in range(grid.dim)]))


def smooth_scalar(grid, seed):
    return ScalarField(grid, random_smooth(grid, np.random.default_rng(seed), 4, 0.35))


def parameter_sweep(n=100, seed=0):
    """Exact rational (mu, lam) pairs with mu > 0 and 2 mu + 3 lam >= 0, straddling mu = 4 lam."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        mu = Fraction(int(rng.integers(1, 200)), int(rng.integers(1, 50)))
        lam = Fraction(int(rng.integers(-66, 100)), 100) * mu
        out.append((mu, lam))
    out += [(Fraction(4), Fraction(1)), (Fraction(5), Fraction(1))]
    return out


class TestLemmaCoefficient:
    def test_q6_exact_over_sweep(self):
        for mu, lam in parameter_sweep():
            assert E.lemma31_coefficient(mu, lam, 6) == 6 * (mu - 4 * lam)

    def test_positivity_iff_mu_exceeds_4lam(self):
        for mu, lam in parameter_sweep():
            assert (E.lemma31_coefficient(mu, lam, 6) > 0) == (mu > 4 * lam)

    def test_symbolic(self):
        mu, lam, q = sympy.symbols("mu lambda q", positive=True)
        expr = E.lemma31_coefficient(mu, lam, q)
        expected = q * (mu * (q - 1) - sympy.Rational(1, 4) * (lam + mu) * (q - 2) ** 2)
        assert sympy.simplify(expr - expected) == 0
        assert sympy.expand(expr.subs(q, 6)) == sympy.expand(6 * (mu - 4 * lam))
        assert sympy.expand(expr.subs(q, 4)) == sympy.expand(4 * (2 * mu - lam))
        assert sympy.expand(expr.subs(q, 2)) == 2 * mu

    def test_float_examples(self):
        assert E.lemma31_coefficient(5.0, 1.0, 6) == pytest.approx(6.0)
        assert E.lemma31_coefficient(1.0, 0.3, 2) == pytest.approx(2.0)

    def test_rejects(self):
        with pytest.raises(ValueError):
            E.lemma31_coefficient(1.0, 0.0, 1.5)
        with pytest.raises(ValueError):
            E.lemma31_coefficient(0.0, 0.0, 6)


class TestPointwiseGradient:
    def test_constant(self):
        g = GridSpec(2, 16)
        u = VectorField(g, np.ones((2,) + g.shape) * np.array([0.3, -0.2])[:, None, None])
        assert E.pointwise_gradient_inequality(u) <= 1e-14

    def test_equality_case(self):
        g = GridSpec(2, 64)
        x, _ = g.coords()
        u = VectorField(g, np.array([np.sin(TWO_PI * x) + 0.3 * np.cos(2 * TWO_PI * x), 0 * x]))
        jac_max = np.max(np.abs(F.jacobian(u)))
        assert abs(E.pointwise_gradient_inequality(u)) <= 1e-12 * jac_max

    @pytest.mark.parametrize("seed", range(4))
    def test_random_smooth(self, seed):
        g = GridSpec(2, 64)
        u = smooth_vector(g, seed)
        jac_max = np.max(np.sqrt(np.sum(F.jacobian(u) ** 2, axis=(0, 1))))
        assert E.pointwise_gradient_inequality(u) <= 1e-3 * jac_max

    def test_violation_nonincreasing_under_refinement(self):
        for seed in range(3):
            excess = [max(E.pointwise_gradient_inequality(smooth_vector(GridSpec(2, n), seed)), 0.0) for n in (32, 64, 128)]
            assert excess[0] >= excess[1] >= excess[2]
            assert excess[-1] <= 1e-12


class TestSobolev:
    def test_single_mode(self):
        g = GridSpec(2, 32)
        x, _ = g.coords()
        rep = E.sobolev_ratio(ScalarField(g, np.sin(TWO_PI * x)))
        # refined-grid quadrature of sin^6 and cos^2 over one period
        xs = (np.arange(4096) + 0.5) / 4096
        l6 = np.mean(np.sin(TWO_PI * xs) ** 6) ** (1 / 6)
        l2 = TWO_PI * np.sqrt(np.mean(np.cos(TWO_PI * xs) ** 2))
        assert rep.ratio == pytest.approx(l6 / l2, rel=1e-12)
        assert rep.ratio == pytest.approx((5 / 16) ** (1 / 6) / (TWO_PI / math.sqrt(2)), rel=1e-12)

    @pytest.mark.parametrize("alpha", [2.0, -3.5, 1e-3])
    def test_scale_invariant(self, alpha):
        f = smooth_scalar(GridSpec(2, 32), 3)
        assert E.sobolev_ratio(f * alpha).ratio == pytest.approx(E.sobolev_ratio(f).ratio, rel=1e-13)

    def test_mean_removed(self):
        f = smooth_scalar(GridSpec(2, 32), 3)
        assert E.sobolev_ratio(f + 10.0).ratio == pytest.approx(E.sobolev_ratio(f).ratio, rel=1e-12)

    def test_constant_undefined(self):
        with pytest.raises(E.UndefinedRatioError):
            E.sobolev_ratio(ScalarField.constant(GridSpec(2, 8), 2.0))

    def test_empirical_bound(self):
        ratios = [E.sobolev_ratio(smooth_scalar(GridSpec(2, 32), s)).ratio for s in range(100)]
        # the lowest admissible mode dominates; 0.25 bounds every sample with margin
        assert max(ratios) <= 0.25
        assert min(ratios) > 0


class TestLogEstimate:
    def test_zero(self):
        rep = E.log_estimate_monitor(VectorField.zeros(GridSpec(2, 16)))
        assert rep.lhs == 0 and rep.satisfied_for_constant == 0

    def test_gradient_field(self):
        g = GridSpec(2, 32)
        x, y = g.coords()
        phi = ScalarField(g, np.sin(TWO_PI * x) * np.cos(TWO_PI * y))
        rep = E.log_estimate_monitor(F.gradient(phi))
        assert rep.rhs_components["curl_inf"] <= 1e-10
        assert rep.rhs_components["div_inf"] == pytest.approx(2 * TWO_PI**2, rel=1e-12)
        assert rep.lhs <= rep.satisfied_for_constant * (
            rep.rhs_components["div_inf"] * rep.rhs_components["log_factor"] + rep.rhs_components["grad_l2"] + 1
        ) * (1 + 1e-12)

    def test_scaling_requires_different_constant(self):
        u = smooth_vector(GridSpec(2, 32), 1)
        small, large = E.log_estimate_monitor(u), E.log_estimate_monitor(u * 100.0)
        assert large.lhs == pytest.approx(100 * small.lhs, rel=1e-12)
        assert large.rhs_components["log_factor"] < 100 * small.rhs_components["log_factor"]
        assert large.satisfied_for_constant != pytest.approx(small.satisfied_for_constant, rel=1e-3)

    def test_hessian_of_single_mode(self):
        g = GridSpec(2, 16)
        x, _ = g.coords()
        u = VectorField(g, np.array([np.sin(TWO_PI * x), 0 * x]))
        H = E.second_derivatives(u)
        np.testing.assert_allclose(H[0, 0, 0], -(TWO_PI**2) * np.sin(TWO_PI * x), atol=1e-11)
        assert np.max(np.abs(H[1])) == 0 and np.max(np.abs(H[0, 0, 1])) <= 1e-12

    def test_rejects_q(self):
        with pytest.raises(ValueError):
            E.log_estimate_monitor(VectorField.zeros(GridSpec(2, 8)), q_tilde=3.0)

    def test_report_serializes(self):
        d = E.log_estimate_monitor(smooth_vector(GridSpec(2, 16), 0), t=0.5).to_dict()
        assert d["type"] == "monitor" and d["t"] == 0.5 and set(d["rhs_components"]) >= {"div_inf", "hessian_lq"}


class TestSupInterpolation:
    def test_reported(self):
        rep = E.sup_interpolation_ratio(smooth_scalar(GridSpec(2, 32), 2), p=2, q=4)
        assert 0 < rep.ratio < math.inf


class TestGronwall:
    def _double_exponential(self, C, dt, t_end=1.0):
        t = np.arange(0.0, t_end + dt / 2, dt)
        return E.GronwallLedger(t, np.exp(np.exp(C * t)), np.ones_like(t))

    @pytest.mark.parametrize("C", [0.3, 1.0, 2.0])
    def test_equality_case(self, C):
        assert E.gronwall_fit(self._double_exponential(C, 1e-3)) == pytest.approx(C, abs=1e-3)

    def test_constant(self):
        t = np.linspace(0, 1, 11)
        assert E.gronwall_fit(E.GronwallLedger(t, np.full(11, 5.0), np.full(11, 2.0))) == 0.0

    def test_decreasing_clipped(self):
        t = np.linspace(0, 1, 11)
        assert E.gronwall_fit(E.GronwallLedger(t, 10.0 - t, np.ones(11))) == 0.0

    def test_subsampling_invariance(self):
        ledger = self._double_exponential(0.8, 1e-2)
        assert ledger.subsample(2).C_fit == pytest.approx(ledger.C_fit, rel=0.1)

    def test_validation(self):
        with pytest.raises(ValueError):
            E.gronwall_fit(E.GronwallLedger(np.array([0.0, 1.0]), np.array([3.0, 4.0]), np.ones(2)))
        with pytest.raises(ValueError):
            E.gronwall_fit(E.GronwallLedger(np.array([0.0, 1.0, 1.0]), np.full(3, 3.0), np.ones(3)))
        with pytest.raises(ValueError):
            E.GronwallLedger(np.arange(3.0), np.full(3, 2.0), np.ones(3))

    def test_from_records(self):
        g = GridSpec(2, 16)
        p = PhysParams(mu=0.05)
        recs = []
        for k in range(3):
            s = make_scenario(Scenario("manufactured", amplitude=0.1 * (k + 1), seed=1), g, p)
            rec = make_record(s)
            rec.t = 0.1 * k
            recs.append(rec)
        ledger = E.GronwallLedger.from_records(recs)
        assert np.all(ledger.f >= math.e) and np.all(ledger.g >= 1)
        assert ledger.C_fit > 0


def test_time_derivative_matches_numpy():
    t = np.cumsum(np.random.default_rng(0).uniform(0.5, 1.5, 20))
    f = np.sin(t) + t**2
    np.testing.assert_allclose(E.time_derivative(t, f), np.gradient(f, t, edge_order=2), rtol=1e-12, atol=1e-12)
