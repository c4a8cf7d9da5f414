import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from vrharq.channel import (
    ChannelModel,
    db_to_linear,
    ergodic_stats,
    mutual_information,
    single_outage,
    snr_cdf,
)

# Rayleigh: c_bar = e^{1/g} E1(1/g) / ln 2, mpmath at 30 digits
RAYLEIGH_CBAR = [(1.0, 0.86034738227088595), (10.0, 2.9065148084148049), (1000.0, 9.1436194910373308)]
# (m, gamma_bar, c_bar, sigma) by mpmath quad
MPMATH_STATS = [
    (2.0, 10.0, 3.1662525061024752, 0.95385038242621339),
    (0.5, 100.0, 5.1588926250428025, 2.4369511380200958),
]


class TestModel:
    def test_from_db(self):
        md = ChannelModel.from_db(1.0, 10.0)
        assert md.gamma_bar == pytest.approx(10.0)
        assert md.snr_db == pytest.approx(10.0)
        assert ChannelModel(2.0, 10.0).scale == 5.0

    @pytest.mark.parametrize("m, g", [(0.4, 1.0), (1.0, 0.0), (1.0, -1.0), (1.0, math.inf)])
    def test_invalid(self, m, g):
        with pytest.raises(ValueError):
            ChannelModel(m, g)

    def test_pdf_integrates_to_one(self):
        from scipy import integrate

        for m in (0.5, 1.0, 3.0):
            md = ChannelModel(m, 4.0)
            val, _ = integrate.quad(md.pdf, 0, np.inf)
            assert val == pytest.approx(1.0, abs=1e-8)

    def test_db_to_linear(self):
        assert db_to_linear(20.0) == pytest.approx(100.0)


class TestCdfAndOutage:
    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.5, 8.0), st.floats(-10.0, 40.0), st.floats(0.0, 1e4))
    def test_cdf_matches_scipy_gamma(self, m, db, x):
        md = ChannelModel.from_db(m, db)
        ref = sps.gamma(a=m, scale=md.scale).cdf(x)
        assert snr_cdf(md, x) == pytest.approx(ref, abs=1e-12)

    def test_outage_closed_form_rayleigh(self):
        md = ChannelModel(1.0, 10.0)
        rho = 0.5
        assert single_outage(md, rho) == pytest.approx(1 - math.exp(-(2**2 - 1) / 10.0), rel=1e-13)

    def test_outage_limits(self):
        md = ChannelModel(1.0, 10.0)
        assert single_outage(md, 1e-5) == 1.0
        assert single_outage(md, 1e6) == pytest.approx(0.0, abs=1e-5)
        with pytest.raises(ValueError):
            single_outage(md, 0.0)

    def test_outage_decreasing_in_rho(self):
        md = ChannelModel(2.0, 3.0)
        vals = single_outage(md, np.geomspace(0.01, 10, 50))
        assert np.all(np.diff(vals) <= 1e-15)

    def test_mutual_information(self):
        assert mutual_information(3.0) == pytest.approx(2.0)
        with pytest.raises(ValueError):
            mutual_information(-1.0)


class TestErgodic:
    @pytest.mark.parametrize("g, expected", RAYLEIGH_CBAR)
    def test_rayleigh_closed_form(self, g, expected):
        assert ergodic_stats(ChannelModel(1.0, g)).c_bar == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("m, g, c_bar, sigma", MPMATH_STATS)
    def test_against_mpmath(self, m, g, c_bar, sigma):
        stats = ergodic_stats(ChannelModel(m, g))
        assert stats.c_bar == pytest.approx(c_bar, rel=1e-10)
        assert stats.sigma == pytest.approx(sigma, rel=1e-8)
        assert stats.xi == pytest.approx(c_bar / sigma, rel=1e-8)

    def test_low_snr_limit(self):
        # C(g) ~ g / ln 2 for tiny g: c_bar -> gamma_bar / ln 2
        g = 1e-6
        assert ergodic_stats(ChannelModel(1.0, g)).c_bar == pytest.approx(g / math.log(2), rel=1e-5)

    def test_increases_with_m_at_fixed_snr(self):
        # less fading, higher ergodic capacity (Jensen)
        vals = [ergodic_stats(ChannelModel.from_db(m, 10)).c_bar for m in (0.5, 1, 2, 8)]
        assert np.all(np.diff(vals) > 0)
        assert vals[-1] < math.log2(11)

    def test_monte_carlo_sanity(self):
        md = ChannelModel.from_db(1.5, 15.0)
        rng = np.random.default_rng(0)
        c = np.log2(1 + rng.gamma(md.m, md.scale, 400_000))
        stats = ergodic_stats(md)
        assert abs(c.mean() - stats.c_bar) < 4 * c.std() / math.sqrt(c.size)
        assert c.std() == pytest.approx(stats.sigma, rel=1e-2)
