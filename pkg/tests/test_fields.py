import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cnslab import fields as F
from cnslab import oracles
from cnslab.fields import GridSpec, ScalarField, VectorField

TWO_PI = 2 * np.pi


def random_scalar(grid, seed):
    return ScalarField(grid, np.random.default_rng(seed).standard_normal(grid.shape))


def random_vector(grid, seed):
    return VectorField(grid, np.random.default_rng(seed).standard_normal((grid.dim,) + grid.shape))


def smooth_vector(grid, seed, kmax=3):
    """Band-limited random vector field."""
    rng = np.random.default_rng(seed)
    X = grid.coords()
    comps = []
    for _ in range(grid.dim):
        total = np.zeros(grid.shape)
        for _ in range(6):
            k = rng.integers(-kmax, kmax + 1, size=grid.dim)
            phase = rng.uniform(0, TWO_PI)
            total += rng.standard_normal() * np.cos(TWO_PI * np.tensordot(k, X, axes=1) + phase)
        comps.append(total)
    return VectorField(grid, np.array(comps))


class TestGridSpec:
    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            GridSpec(2, 12)
        with pytest.raises(ValueError):
            GridSpec(2, 4)
        with pytest.raises(ValueError):
            GridSpec(4, 8)
        with pytest.raises(ValueError):
            GridSpec(2, 8, -1.0)

    def test_per_axis_length(self):
        g = GridSpec(2, 8, (1.0, 2.0))
        assert g.length == (1.0, 2.0)
        assert g.volume == 2.0
        assert g.spacing == (0.125, 0.25)

    def test_field_shape_checked(self):
        g = GridSpec(2, 8)
        with pytest.raises(ValueError):
            ScalarField(g, np.zeros((8, 9)))
        with pytest.raises(ValueError):
            VectorField(g, np.zeros((3, 8, 8)))


class TestGradient:
    def test_constant(self):
        g = GridSpec(2, 16)
        out = F.gradient(ScalarField.constant(g, 3.7))
        assert np.max(np.abs(out.values)) == 0.0

    def test_sin(self):
        g = GridSpec(2, 32)
        x, y = g.coords()
        out = F.gradient(ScalarField(g, np.sin(TWO_PI * x)))
        np.testing.assert_allclose(out.values[0], TWO_PI * np.cos(TWO_PI * x), atol=1e-12)
        np.testing.assert_allclose(out.values[1], 0.0, atol=1e-12)

    @pytest.mark.parametrize("dim", [2, 3])
    def test_dense_oracle(self, dim):
        g = GridSpec(dim, 8)
        f = random_scalar(g, 1)
        np.testing.assert_allclose(F.gradient(f).values, oracles.gradient(g, f.values), rtol=0, atol=1e-12)

    def test_zero_mode_exact(self):
        g = GridSpec(2, 16)
        out = F.gradient(random_scalar(g, 2))
        for c in out.values:
            assert abs(np.fft.fftn(c)[0, 0]) < 1e-12

    def test_nonfinite_rejected(self):
        g = GridSpec(2, 8)
        v = np.zeros(g.shape)
        v[1, 1] = np.nan
        with pytest.raises(F.NonFiniteError):
            F.gradient(ScalarField(g, v))


class TestDivergenceCurl:
    def test_divergence_constant(self):
        g = GridSpec(3, 8)
        u = VectorField(g, np.ones((3,) + g.shape) * np.array([1.0, -2.0, 0.5])[:, None, None, None])
        assert np.max(np.abs(F.divergence(u).values)) == 0.0

    def test_divergence_analytic(self):
        g = GridSpec(2, 32)
        x, y = g.coords()
        u = VectorField(g, np.array([np.sin(TWO_PI * x), np.sin(TWO_PI * y)]))
        expected = TWO_PI * (np.cos(TWO_PI * x) + np.cos(TWO_PI * y))
        np.testing.assert_allclose(F.divergence(u).values, expected, atol=1e-12)

    @pytest.mark.parametrize("dim", [2, 3])
    def test_divergence_oracle(self, dim):
        g = GridSpec(dim, 8)
        u = random_vector(g, 3)
        np.testing.assert_allclose(F.divergence(u).values, oracles.divergence(g, u.values), atol=1e-12)

    def test_divergence_mean_zero(self):
        g = GridSpec(2, 16)
        assert F.integrate(F.divergence(random_vector(g, 4))) == pytest.approx(0.0, abs=1e-13)

    def test_curl_2d_analytic(self):
        g = GridSpec(2, 32)
        x, y = g.coords()
        u = VectorField(g, np.array([-np.sin(TWO_PI * y), np.sin(TWO_PI * x)]))
        expected = TWO_PI * (np.cos(TWO_PI * x) + np.cos(TWO_PI * y))
        w = F.curl(u)
        assert isinstance(w, ScalarField)
        np.testing.assert_allclose(w.values, expected, atol=1e-12)

    @pytest.mark.parametrize("dim", [2, 3])
    def test_curl_oracle(self, dim):
        g = GridSpec(dim, 8)
        u = random_vector(g, 5)
        np.testing.assert_allclose(F.curl(u).values, oracles.curl(g, u.values), atol=1e-12)

    @pytest.mark.parametrize("dim", [2, 3])
    def test_curl_grad_vanishes(self, dim):
        g = GridSpec(dim, 16)
        f = random_scalar(g, 6)
        assert np.max(np.abs(F.curl(F.gradient(f)).values)) <= 1e-11

    def test_div_curl_vanishes(self):
        g = GridSpec(3, 16)
        u = random_vector(g, 7)
        assert np.max(np.abs(F.divergence(F.curl(u)).values)) <= 1e-11

    def test_curl_curl_identity_smooth(self):
        g = GridSpec(3, 16)
        u = smooth_vector(g, 8)
        lhs = F.curl_of(F.curl(u)).values
        rhs = F.grad_div(u).values - F.vector_laplacian(u).values
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)


class TestLaplacian:
    def test_constant(self):
        g = GridSpec(2, 8)
        assert np.max(np.abs(F.laplacian(ScalarField.constant(g, 2.0)).values)) == 0.0

    def test_sin(self):
        g = GridSpec(2, 32)
        x, _ = g.coords()
        out = F.laplacian(ScalarField(g, np.sin(TWO_PI * x)))
        np.testing.assert_allclose(out.values, -(TWO_PI**2) * np.sin(TWO_PI * x), atol=1e-10)

    @pytest.mark.parametrize("dim", [2, 3])
    def test_oracle(self, dim):
        g = GridSpec(dim, 8)
        f = random_scalar(g, 9)
        np.testing.assert_allclose(F.laplacian(f).values, oracles.laplacian(g, f.values), atol=1e-12)

    def test_vector_laplacian_componentwise(self):
        g = GridSpec(2, 8)
        u = random_vector(g, 10)
        out = F.vector_laplacian(u)
        for i in range(2):
            np.testing.assert_allclose(out.values[i], oracles.laplacian(g, u.values[i]), atol=1e-12)

    def test_non_unit_box(self):
        g = GridSpec(2, 32, (2.0, 0.5))
        x, y = g.coords()
        f = ScalarField(g, np.sin(np.pi * x) * np.cos(4 * np.pi * y))
        expected = -(np.pi**2 + (4 * np.pi) ** 2) * f.values
        np.testing.assert_allclose(F.laplacian(f).values, expected, atol=1e-9)


class TestLinearity:
    @settings(max_examples=20, deadline=None)
    @given(alpha=st.floats(-10, 10), beta=st.floats(-10, 10), seed=st.integers(0, 10_000))
    def test_operators_linear(self, alpha, beta, seed):
        g = GridSpec(2, 8)
        a, b = random_scalar(g, seed), random_scalar(g, seed + 1)
        u, v = random_vector(g, seed + 2), random_vector(g, seed + 3)
        combo = ScalarField(g, alpha * a.values + beta * b.values)
        vcombo = VectorField(g, alpha * u.values + beta * v.values)
        scale = 1 + abs(alpha) + abs(beta)
        for op, x, y, xy in [
            (F.gradient, a, b, combo),
            (F.laplacian, a, b, combo),
            (F.divergence, u, v, vcombo),
            (F.curl, u, v, vcombo),
        ]:
            lhs = op(xy).values
            rhs = alpha * op(x).values + beta * op(y).values
            assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale * max(1.0, np.max(np.abs(rhs)))


class TestQuadrature:
    def test_constant(self):
        g = GridSpec(3, 8)
        assert F.integrate(ScalarField.constant(g, 2.5)) == pytest.approx(2.5, rel=1e-15)

    def test_sin_zero(self):
        g = GridSpec(2, 16)
        x, _ = g.coords()
        assert abs(F.integrate(ScalarField(g, np.sin(TWO_PI * x)))) <= 1e-14

    def test_parseval(self):
        g = GridSpec(2, 16, (1.0, 3.0))
        f = random_scalar(g, 11)
        coeffs = np.fft.fftn(f.values) / g.size
        parseval = np.sum(np.abs(coeffs) ** 2) * g.volume
        assert F.integrate(f * f) == pytest.approx(parseval, rel=1e-12)


class TestNorms:
    @pytest.mark.parametrize("p", [1, 2, 3.5, 6, np.inf])
    def test_constant(self, p):
        g = GridSpec(2, 8)
        assert F.lp_norm(ScalarField.constant(g, -3.0), p) == pytest.approx(3.0, rel=1e-14)

    def test_sin_l2(self):
        g = GridSpec(2, 32)
        x, _ = g.coords()
        assert F.lp_norm(ScalarField(g, np.sin(TWO_PI * x)), 2) == pytest.approx(1 / np.sqrt(2), rel=1e-14)

    def test_rejects_small_p(self):
        g = GridSpec(2, 8)
        with pytest.raises(ValueError):
            F.lp_norm(ScalarField.constant(g, 1.0), 0.5)

    def test_refined_riemann_oracle(self):
        # |f|^p is only smooth away from zeros, so the random field is kept positive
        g = GridSpec(2, 32)
        rough = smooth_vector(g, 15, kmax=3).values[0]
        f = ScalarField(g, 2.0 + rough / np.max(np.abs(rough)))
        fine = F.resample(f, g.refined(4))
        for p in (1, 2.5, 3):
            ref = (np.mean(np.abs(fine.values) ** p)) ** (1 / p)
            assert F.lp_norm(f, p) == pytest.approx(ref, rel=1e-6)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 100_000))
    def test_monotone_in_p(self, seed):
        g = GridSpec(2, 8)
        f = random_scalar(g, seed)
        norms = [F.lp_norm(f, p) for p in (1, 2, 4, 6, np.inf)]
        assert all(a <= b * (1 + 1e-12) for a, b in zip(norms, norms[1:]))


class TestDealias:
    def test_identity_factor(self):
        g = GridSpec(2, 16)
        b = random_scalar(g, 12)
        out = F.dealias_product(ScalarField.constant(g, 1.0), b)
        np.testing.assert_allclose(out.values, F.truncate(b).values, atol=1e-13)

    def test_low_modes_exact(self):
        g = GridSpec(2, 32)
        x, y = g.coords()
        a = ScalarField(g, np.sin(TWO_PI * x))
        b = ScalarField(g, np.cos(2 * TWO_PI * y))
        np.testing.assert_allclose(F.dealias_product(a, b).values, a.values * b.values, atol=1e-13)

    @pytest.mark.parametrize("dim", [2, 3])
    def test_convolution_oracle(self, dim):
        g = GridSpec(dim, 8)
        a, b = random_scalar(g, 13), random_scalar(g, 14)
        np.testing.assert_allclose(
            F.dealias_product(a, b).values, oracles.convolution_product(g, a.values, b.values), atol=1e-12
        )

    def test_high_mode_alias_removed(self):
        # k=2 times k=2 on n=8 lands on the Nyquist mode; the plain product aliases it
        g = GridSpec(2, 8)
        x, _ = g.coords()
        a = ScalarField(g, np.cos(2 * TWO_PI * x))
        out = F.dealias_product(a, a)
        expected = oracles.convolution_product(g, a.values, a.values)
        np.testing.assert_allclose(out.values, expected, atol=1e-13)
        np.testing.assert_allclose(out.values, 0.5, atol=1e-13)

    def test_grid_mismatch(self):
        with pytest.raises(F.GridMismatchError):
            F.dealias_product(ScalarField.constant(GridSpec(2, 8), 1), ScalarField.constant(GridSpec(2, 16), 1))


class TestResample:
    def test_band_limited_exact(self):
        g = GridSpec(3, 8)
        x, y, z = g.coords()
        f = ScalarField(g, np.sin(TWO_PI * x) * np.cos(2 * TWO_PI * z) + y * 0 + 0.2)
        fine = g.refined(2)
        X, Y, Z = fine.coords()
        np.testing.assert_allclose(
            F.resample(f, fine).values, np.sin(TWO_PI * X) * np.cos(2 * TWO_PI * Z) + 0.2, atol=1e-13
        )
