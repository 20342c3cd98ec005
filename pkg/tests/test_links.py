import math

import mpmath as mp
import numpy as np
import pytest

from cstrans import (
    InvalidShapeParameterError,
    LinkFamily,
    cdf,
    concavity_margins,
    inverse_cdf,
    link_from_string,
    log_cdf_pair,
    pdf_and_dpdf,
    score_factor,
)

ALL_LINKS = [
    LinkFamily("extreme_value"),
    LinkFamily("logistic"),
    LinkFamily("pareto", 0.5),
    LinkFamily("pareto", 2.0),
    LinkFamily("probit"),
]


def test_logistic_cdf_at_zero_is_half():
    assert cdf(LinkFamily("logistic"), 0.0) == pytest.approx(0.5, abs=1e-15)


def test_extreme_value_cdf_at_zero():
    assert cdf(LinkFamily("extreme_value"), 0.0) == pytest.approx(1 - math.exp(-1), abs=1e-15)


def test_pareto_shape_one_equals_logistic_everywhere():
    pareto = LinkFamily("pareto", 1.0)
    logistic = LinkFamily("logistic")
    s = np.linspace(-30, 30, 501)
    assert np.max(np.abs(cdf(pareto, s) - cdf(logistic, s))) < 1e-12
    lp, ls = log_cdf_pair(pareto, s), log_cdf_pair(logistic, s)
    assert np.max(np.abs(lp[0] - ls[0])) < 1e-12
    # absolute comparison saturates for the huge-magnitude tail logs
    assert np.max(np.abs(lp[1] - ls[1]) / (1 + np.abs(ls[1]))) < 1e-12


def test_pareto_tiny_shape_matches_extreme_value():
    pareto = LinkFamily("pareto", 1e-6)
    ev = LinkFamily("extreme_value")
    s = np.linspace(-10, 10, 2001)
    assert np.max(np.abs(cdf(pareto, s) - cdf(ev, s))) < 1e-5


def test_pareto_invalid_shape_rejected():
    for bad in (0.0, -1.0, float("nan")):
        with pytest.raises(InvalidShapeParameterError):
            LinkFamily("pareto", bad)
    with pytest.raises(InvalidShapeParameterError):
        link_from_string("pareto")


def test_shape_on_shapeless_family_rejected():
    with pytest.raises(InvalidShapeParameterError):
        LinkFamily("logistic", 1.0)


def test_link_from_string():
    assert link_from_string("extreme_value") == LinkFamily("extreme_value")
    assert link_from_string("pareto:0.25") == LinkFamily("pareto", 0.25)
    with pytest.raises(ValueError):
        link_from_string("weibull")


class TestLogCdfPair:
    def test_extreme_value_at_zero(self):
        log_f, log_sf = log_cdf_pair(LinkFamily("extreme_value"), 0.0)
        assert log_sf == -1.0
        assert log_f == pytest.approx(math.log(1 - math.exp(-1)), abs=1e-15)

    def test_logistic_deep_left_tail(self):
        log_f, log_sf = log_cdf_pair(LinkFamily("logistic"), -40.0)
        assert log_f == pytest.approx(-40.0, abs=1e-12)
        assert -1e-15 <= log_sf <= 0.0

    def test_pareto_matches_high_precision_reference(self):
        # 50-digit reference: F = 1 - (1 + 0.5 e^2)^{-2} at s = 2
        log_f, log_sf = log_cdf_pair(LinkFamily("pareto", 0.5), 2.0)
        assert log_f == pytest.approx(-0.04643662945197755002016959, rel=1e-14)
        assert log_sf == pytest.approx(-3.092795171323878390903382, rel=1e-14)

    def test_finite_and_consistent_out_to_700(self):
        for link in ALL_LINKS:
            for s in (-700.0, -300.0, -5.0, 0.0, 5.0, 300.0, 700.0):
                log_f, log_sf = log_cdf_pair(link, s)
                assert np.isfinite(log_f) and np.isfinite(log_sf)
                assert log_f <= 0 and log_sf <= 0
                # the pair must describe complementary probabilities
                assert math.exp(log_f) + math.exp(log_sf) == pytest.approx(1.0, abs=1e-12)

    def test_agrees_with_mpmath_across_families(self):
        # tail survival probabilities reach 1e-300, so the reference needs
        # far more working digits than the comparison tolerance
        mp.mp.dps = 350
        grid = [-35.0, -12.3, -1.0, 0.0, 0.7, 9.5, 30.0]
        for link in ALL_LINKS:
            for s in grid:
                x = mp.mpf(s)
                if link.family == "extreme_value":
                    sf = mp.exp(-mp.exp(x))
                elif link.family == "logistic":
                    sf = 1 / (1 + mp.exp(x))
                elif link.family == "pareto":
                    sf = (1 + mp.mpf(link.shape) * mp.exp(x)) ** (-1 / mp.mpf(link.shape))
                else:
                    sf = mp.ncdf(-x)
                log_f, log_sf = log_cdf_pair(link, s)
                assert log_sf == pytest.approx(float(mp.log(sf)), rel=1e-12, abs=5e-324)
                assert log_f == pytest.approx(float(mp.log1p(-sf)), rel=1e-12, abs=5e-324)


class TestPdfAndDpdf:
    def test_logistic_peak(self):
        f, fdot = pdf_and_dpdf(LinkFamily("logistic"), 0.0)
        assert f == pytest.approx(0.25, abs=1e-15)
        assert fdot == pytest.approx(0.0, abs=1e-15)

    def test_extreme_value_at_zero(self):
        f, fdot = pdf_and_dpdf(LinkFamily("extreme_value"), 0.0)
        assert f == pytest.approx(math.exp(-1), abs=1e-15)
        assert fdot == pytest.approx(0.0, abs=1e-16)

    def test_pareto_derivative_matches_finite_difference(self):
        link = LinkFamily("pareto", 2.0)
        rng = np.random.default_rng(2)
        h = 1e-6
        for s in rng.uniform(-8, 8, 25):
            _, fdot = pdf_and_dpdf(link, s)
            fd = (pdf_and_dpdf(link, s + h)[0] - pdf_and_dpdf(link, s - h)[0]) / (2 * h)
            assert fdot == pytest.approx(fd, rel=1e-7, abs=1e-12)

    def test_density_matches_finite_difference_of_cdf(self):
        rng = np.random.default_rng(4)
        h = 1e-6
        for link in ALL_LINKS:
            for s in rng.uniform(-6, 6, 20):
                f, _ = pdf_and_dpdf(link, s)
                fd = (cdf(link, s + h) - cdf(link, s - h)) / (2 * h)
                assert f == pytest.approx(fd, rel=1e-6, abs=1e-10)


class TestScoreFactor:
    def test_logistic_closed_forms(self):
        logistic = LinkFamily("logistic")
        assert score_factor(logistic, 1, 0.0) == pytest.approx(0.5, abs=1e-15)
        assert score_factor(logistic, 0, 0.0) == pytest.approx(-0.5, abs=1e-15)

    def test_extreme_value_event_at_zero(self):
        value = score_factor(LinkFamily("extreme_value"), 1, 0.0)
        assert value == pytest.approx(0.5819767068693264, rel=1e-14)

    def test_sign_pattern(self):
        # the delta=1 factor is f/F, which underflows to 0 past s ~ 6.6 for
        # the double-exponential tail; strict signs hold on the range where
        # doubles can represent them
        rng = np.random.default_rng(8)
        for link in ALL_LINKS:
            s_event = rng.uniform(-30, 6, 200)
            s_censored = rng.uniform(-30, 30, 200)
            assert np.all(score_factor(link, np.ones_like(s_event), s_event) > 0)
            assert np.all(score_factor(link, np.zeros_like(s_censored), s_censored) < 0)


class TestFamilyConditions:
    def test_cdf_strictly_increasing(self):
        rng = np.random.default_rng(21)
        for link in ALL_LINKS:
            # direct scale where nothing saturates
            s = rng.uniform(-5, 5, 300)
            h = rng.uniform(0.01, 2.0, 300)
            assert np.all(cdf(link, s + h) > cdf(link, s))
            # log scale across the wide range: log(1-F) strictly decreasing
            wide = np.sort(rng.uniform(-30, 30, 300))
            log_sf = log_cdf_pair(link, wide)[1]
            assert np.all(np.diff(log_sf) < 0)

    def test_concavity_margins_positive(self):
        rng = np.random.default_rng(34)
        for link in ALL_LINKS:
            s = rng.uniform(-30, 30, 10_000)
            left, right = concavity_margins(link, s)
            assert np.all(left > 0)
            assert np.all(right > 0)

    def test_cdf_interior_for_finite_s(self):
        for link in ALL_LINKS:
            values = cdf(link, np.array([-30.0, 0.0, 5.0]))
            assert np.all(values > 0) and np.all(values < 1)
            # in the far right tail interiority is visible in log space
            log_sf = log_cdf_pair(link, np.array([10.0, 30.0]))[1]
            assert np.all(log_sf < 0)


def test_inverse_cdf_round_trip():
    for link in ALL_LINKS:
        for p in (0.01, 0.3, 0.5, 0.77, 0.99):
            assert cdf(link, inverse_cdf(link, p)) == pytest.approx(p, rel=1e-10)
    with pytest.raises(ValueError):
        inverse_cdf(LinkFamily("logistic"), 0.0)
