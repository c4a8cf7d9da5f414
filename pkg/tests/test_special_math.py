import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from vrharq.special_math import (
    ConvergenceError,
    DiscretizedDensity,
    convolve_densities,
    gauss_jacobi_unit,
    gauss_laguerre_rule,
    q_function,
    regularized_lower_gamma,
)

# mpmath.gammainc(m, 0, x, regularized=True) at 30 digits
MPMATH_P = [
    (0.5, 0.01, 0.11246291601828489),
    (0.5, 3.0, 0.98569412156457036),
    (1.0, 1.0, 0.63212055882855768),
    (2.0, 0.5, 0.090204010431049865),
    (2.0, 10.0, 0.99950060077261267),
    (4.0, 40.0, 0.99999999999995111),
    (8.5, 3.2, 0.0099305552341526376),
    (30.0, 25.0, 0.18210391597745511),
]


class TestIncompleteGamma:
    @pytest.mark.parametrize("m, x, expected", MPMATH_P)
    def test_matches_mpmath(self, m, x, expected):
        assert regularized_lower_gamma(m, x) == pytest.approx(expected, rel=1e-13, abs=1e-16)

    def test_exponential_case(self):
        assert regularized_lower_gamma(1.0, 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-12)

    def test_endpoints(self):
        assert regularized_lower_gamma(2.0, 0.0) == 0.0
        assert regularized_lower_gamma(2.0, math.inf) == 1.0

    def test_vectorized_shape_and_type(self):
        out = regularized_lower_gamma(np.array([0.5, 1.0, 2.0])[:, None], np.linspace(0, 5, 4))
        assert out.shape == (3, 4)
        assert isinstance(regularized_lower_gamma(1.0, 2.0), float)

    @pytest.mark.parametrize("m, x", [(0.0, 1.0), (-1.0, 1.0), (1.0, -0.1), (1.0, math.nan)])
    def test_domain_errors(self, m, x):
        with pytest.raises(ValueError):
            regularized_lower_gamma(m, x)

    @settings(max_examples=200, deadline=None)
    @given(
        st.floats(0.5, 60.0),
        st.floats(0.0, 200.0),
    )
    def test_agrees_with_scipy(self, m, x):
        assert regularized_lower_gamma(m, x) == pytest.approx(special.gammainc(m, x), abs=1e-13)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.5, 20.0), st.lists(st.floats(0.0, 50.0), min_size=2, max_size=20))
    def test_monotone_in_x(self, m, xs):
        xs = np.sort(xs)
        vals = regularized_lower_gamma(m, xs)
        assert np.all(np.diff(vals) >= -1e-15)
        assert np.all((vals >= 0) & (vals <= 1))


class TestQFunction:
    def test_values(self):
        assert q_function(0.0) == 0.5
        assert q_function(1.0) == pytest.approx(0.15865525393145705, rel=1e-14)
        assert q_function(-3.0) == pytest.approx(1 - 0.0013498980316301035, rel=1e-14)

    @given(st.floats(-30, 30))
    def test_symmetry(self, x):
        assert q_function(x) + q_function(-x) == pytest.approx(1.0, abs=1e-15)


class TestGaussLaguerre:
    @pytest.mark.parametrize("order", [1, 2, 5, 10, 20, 40, 64])
    def test_matches_numpy(self, order):
        rule = gauss_laguerre_rule(order)
        x, w = np.polynomial.laguerre.laggauss(order)
        np.testing.assert_allclose(rule.nodes, x, rtol=1e-10)
        np.testing.assert_allclose(rule.weights, w, rtol=1e-8, atol=1e-300)

    @pytest.mark.parametrize("order", [3, 10, 40])
    def test_exact_for_polynomials(self, order):
        rule = gauss_laguerre_rule(order)
        # int_0^inf x^n e^-x dx = n!, exact up to degree 2*order - 1
        for n in range(0, min(2 * order, 12)):
            assert rule.integrate(lambda x: x**n) == pytest.approx(math.factorial(n), rel=1e-10)

    def test_cached_and_readonly(self):
        rule = gauss_laguerre_rule(10)
        assert rule is gauss_laguerre_rule(10)
        with pytest.raises(ValueError):
            rule.nodes[0] = 1.0

    @pytest.mark.parametrize("order", [0, 65, 2.5, -3])
    def test_unsupported_order(self, order):
        with pytest.raises(ValueError):
            gauss_laguerre_rule(order)


def test_gauss_jacobi_unit_moments():
    # weight t^b (1-t)^a on [0, 1]: zeroth moment is the Beta function
    t, w = gauss_jacobi_unit(12, 1.5, 0.5)
    assert w.sum() == pytest.approx(special.beta(1.5, 2.5), rel=1e-12)
    assert np.dot(w, t) == pytest.approx(special.beta(2.5, 2.5), rel=1e-12)


class TestLattice:
    def test_point_mass_and_validation(self):
        d = DiscretizedDensity.point_mass(0.3, 0.1)
        assert d.mean() == pytest.approx(0.3)
        with pytest.raises(ValueError):
            DiscretizedDensity(0.0, 0.1, np.array([0.5, 0.4]))
        with pytest.raises(ValueError):
            DiscretizedDensity(0.0, 0.0, np.array([1.0]))
        with pytest.raises(ValueError):
            DiscretizedDensity(0.0, 0.1, np.array([1.2, -0.2]))

    def test_two_dice(self):
        die = DiscretizedDensity(1.0, 1.0, np.full(6, 1 / 6))
        total = convolve_densities(die, die)
        assert total.grid_origin == 2.0
        assert total.masses[5] == pytest.approx(6 / 36)
        assert total.cdf(4.0) == pytest.approx(6 / 36)

    def test_fft_path_matches_direct(self):
        rng = np.random.default_rng(3)
        a = rng.random(900)
        b = rng.random(700)
        da = DiscretizedDensity(0.0, 0.01, a / a.sum())
        db = DiscretizedDensity(0.0, 0.01, b / b.sum())
        np.testing.assert_allclose(
            convolve_densities(da, db).masses, np.convolve(da.masses, db.masses), atol=1e-15
        )

    def test_truncation_lumps_tail(self):
        die = DiscretizedDensity(0.0, 1.0, np.full(4, 0.25))
        out = convolve_densities(die, die, max_bins=3)
        assert out.masses.size == 3
        assert out.masses.sum() == pytest.approx(1.0)
        assert out.masses[:2] == pytest.approx([1 / 16, 2 / 16])

    def test_step_mismatch(self):
        with pytest.raises(ValueError):
            convolve_densities(
                DiscretizedDensity.point_mass(0, 0.1), DiscretizedDensity.point_mass(0, 0.2)
            )


def test_convergence_error_is_runtime_error():
    assert issubclass(ConvergenceError, RuntimeError)
