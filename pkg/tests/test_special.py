import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quantjcd.special import (gauss_hermite, gaussian_tail, log_interval_mass, normal_rule,
                              truncated_normal_moments)

mp.mp.dps = 40


def _mp_cdf(x):
    return mp.ncdf(mp.mpf(x))


def _mp_moments(lo, hi):
    # High-precision oracle for the truncated standard normal on (lo, hi].
    lo, hi = mp.mpf(lo), mp.mpf(hi)
    # Evaluate the mass in the left tail where ncdf keeps full relative precision.
    mass = mp.ncdf(-lo) - mp.ncdf(-hi) if lo > 0 else mp.ncdf(hi) - mp.ncdf(lo)
    pdf = lambda x: mp.npdf(x) if mp.isfinite(x) else mp.mpf(0)
    xpdf = lambda x: x * mp.npdf(x) if mp.isfinite(x) else mp.mpf(0)
    mean = (pdf(lo) - pdf(hi)) / mass
    var = 1 + (xpdf(lo) - xpdf(hi)) / mass - mean ** 2
    return float(mp.log(mass)), float(mean), float(var)


class TestGaussianTail:
    def test_zero(self):
        pdf, cdf, log_cdf = gaussian_tail(0.0)
        assert pdf == pytest.approx(0.3989422804, abs=1e-10)
        assert cdf == 0.5 and log_cdf == pytest.approx(np.log(0.5), rel=1e-15)

    def test_minus_ten(self):
        _, cdf, log_cdf = gaussian_tail(-10.0)
        ref = _mp_cdf(-10)
        assert cdf == pytest.approx(float(ref), rel=1e-10)
        assert np.exp(log_cdf) == pytest.approx(float(ref), rel=1e-10)

    def test_deep_left_tail(self):
        _, _, log_cdf = gaussian_tail(-38.0)
        assert log_cdf == pytest.approx(float(mp.log(_mp_cdf(-38))), rel=1e-12)

    def test_infinite_limits(self):
        pdf, cdf, _ = gaussian_tail(np.inf)
        assert pdf == 0.0 and cdf == 1.0


class TestTruncatedMoments:
    @pytest.mark.parametrize("lo,hi", [(-np.inf, 0.0), (0.0, np.inf), (-1.0, 2.0), (5.0, 6.0),
                                       (-45.0, -44.5), (30.0, np.inf), (-np.inf, -40.0),
                                       (-0.3, -0.2999), (1e-3, 2e-3)])
    def test_against_high_precision(self, lo, hi):
        lm, m, v, deg = truncated_normal_moments(lo, hi)
        rlm, rm, rv = _mp_moments(lo, hi)
        assert not deg
        assert lm == pytest.approx(rlm, rel=1e-12, abs=1e-12)
        assert m == pytest.approx(rm, rel=1e-12, abs=1e-14)
        assert v == pytest.approx(rv, rel=1e-9)

    @settings(max_examples=300, deadline=None)
    @given(st.floats(-60, 60), st.one_of(st.floats(1e-4, 20), st.just(np.inf)))
    def test_random_intervals(self, lo, width):
        hi = lo + width
        lm, m, v, deg = truncated_normal_moments(lo, hi)
        rlm, rm, rv = _mp_moments(lo, hi)
        assert not deg
        assert lm == pytest.approx(rlm, rel=1e-12, abs=1e-12)
        assert m == pytest.approx(rm, rel=1e-12, abs=1e-14)
        assert v == pytest.approx(rv, rel=1e-9)
        assert lo <= m <= hi and 0 < v <= min(1.0, width ** 2 / 4)

    def test_reflection_symmetry(self):
        lo, hi = np.array([-3.0, 0.5, 7.0]), np.array([-1.0, 4.0, np.inf])
        a = truncated_normal_moments(lo, hi)
        b = truncated_normal_moments(-hi, -lo)
        np.testing.assert_allclose(a[0], b[0], rtol=1e-14)
        np.testing.assert_allclose(a[1], -b[1], rtol=1e-14)
        np.testing.assert_allclose(a[2], b[2], rtol=1e-12)

    def test_broadcasting_and_log_mass(self):
        lo = np.array([[-1.0], [0.0]])
        hi = np.array([1.0, 2.0, np.inf])
        lm = log_interval_mass(lo, hi)
        assert lm.shape == (2, 3)
        assert np.exp(lm[1, 2]) == pytest.approx(0.5)


class TestQuadrature:
    def test_normal_rule_moments(self):
        z, w = normal_rule()
        assert w.sum() == pytest.approx(1.0, abs=1e-14)
        assert (w * z ** 2).sum() == pytest.approx(1.0, abs=1e-13)
        assert (w * z ** 4).sum() == pytest.approx(3.0, abs=1e-12)

    def test_refined_rule_handles_kinks(self):
        # E[1{z > c}] has a jump at c; the refinement places a panel edge there.
        c = 0.3721
        z, w = normal_rule([c], width=1e-3)
        assert w[z > c].sum() == pytest.approx(float(1 - _mp_cdf(c)), abs=1e-14)

    def test_order_doubling_drift(self):
        f = lambda z: np.tanh(4 + 2 * z)
        z1, w1 = normal_rule(order=12)
        z2, w2 = normal_rule(order=24)
        assert abs(w1 @ f(z1) - w2 @ f(z2)) < 1e-9

    def test_gauss_hermite(self):
        x, w = gauss_hermite()
        assert w.sum() == pytest.approx(1.0, abs=1e-13)
        assert (w * x ** 2).sum() == pytest.approx(1.0, abs=1e-12)
