import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from frailty_vb.special import (
    digamma,
    invgamma_interval,
    invgamma_mean,
    invgamma_mean_inv,
    invgamma_mean_inv_sq,
    invgamma_mean_log,
)

EULER_GAMMA = 0.57721566490153286061


class TestDigamma:
    @pytest.mark.parametrize("x", [1e-3, 0.01, 0.5, 1.0, 2.5, 5.999, 6.0, 7.3, 42.0, 1e3, 1e6])
    def test_against_mpmath(self, x):
        ref = float(mpmath.digamma(x))
        assert abs(digamma(x) - ref) <= 1e-10 * max(1.0, abs(ref))

    @given(st.floats(1e-3, 1e6))
    def test_relative_accuracy(self, x):
        ref = float(mpmath.digamma(x))
        assert abs(digamma(x) - ref) <= 1e-10 * max(abs(ref), 1e-300) + 1e-14

    @pytest.mark.parametrize("x", [0.5, 1.0, 7.3])
    def test_recurrence(self, x):
        assert digamma(x + 1) - digamma(x) == pytest.approx(1.0 / x, abs=1e-10)

    def test_known_values(self):
        assert digamma(1.0) == pytest.approx(-EULER_GAMMA, abs=1e-12)
        assert digamma(0.5) == pytest.approx(-EULER_GAMMA - 2 * math.log(2), abs=1e-12)

    def test_increasing(self):
        x = np.geomspace(0.1, 1e6, 5000)
        assert np.all(np.diff(digamma(x)) > 0)

    @pytest.mark.parametrize("x", [0.0, -1.0])
    def test_domain(self, x):
        with pytest.raises(ValueError):
            digamma(x)

    def test_vectorised(self):
        x = np.array([0.5, 1.0, 3.0])
        np.testing.assert_array_equal(digamma(x), [digamma(v) for v in x])


class TestInverseGammaMoments:
    def test_closed_forms(self):
        assert invgamma_mean_inv(3, 2) == 1.5
        assert invgamma_mean_inv(1, 1) == 1.0
        assert invgamma_mean_inv_sq(3, 2) == 3.0
        assert invgamma_mean_inv_sq(1, 1) == 2.0
        assert invgamma_mean_log(1, 1) == pytest.approx(EULER_GAMMA, abs=1e-12)

    def test_log_mean_concentrates(self):
        assert abs(invgamma_mean_log(1e6, 1e6)) < 1e-5

    def test_mean_undefined(self):
        assert invgamma_mean(1.0, 2.0) is None
        assert invgamma_mean(3.0, 2.0) == 1.0

    @pytest.mark.parametrize("f", [invgamma_mean_inv, invgamma_mean_inv_sq, invgamma_mean_log])
    def test_rejects_non_positive(self, f):
        with pytest.raises(ValueError):
            f(0.0, 1.0)
        with pytest.raises(ValueError):
            f(1.0, -1.0)


class TestInverseGammaInterval:
    # 2.5% / 97.5% quantiles from bisection on the regularized upper incomplete
    # gamma function (mpmath, 40 digits)
    @pytest.mark.parametrize(
        "shape, scale, lo, hi",
        [
            (28.0, 27.0, 0.6873100241733462, 1.4511606516724878),
            (3.0, 2.0, 0.27682857612446415, 3.232730110158031),
        ],
    )
    def test_against_bisection_oracle(self, shape, scale, lo, hi):
        a, b = invgamma_interval(shape, scale)
        assert a == pytest.approx(lo, abs=1e-8)
        assert b == pytest.approx(hi, abs=1e-8)

    def test_live_oracle(self):
        shape, scale = 7.5, 3.25
        lo, hi = invgamma_interval(shape, scale)
        cdf = lambda x: mpmath.gammainc(shape, scale / x, mpmath.inf, regularized=True)
        assert float(cdf(lo)) == pytest.approx(0.025, abs=1e-10)
        assert float(cdf(hi)) == pytest.approx(0.975, abs=1e-10)
