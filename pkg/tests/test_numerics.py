import math

import hypothesis.strategies as st
import numpy as np
import pytest
import scipy.special
from hypothesis import given

from plrvo.numerics import (
    LOG_ZERO,
    LogValue,
    QuadratureError,
    integrate_decaying,
    log_binomial,
    log_gamma,
    log_sum_exp,
    regularized_lower_gamma,
)


class TestLogGamma:
    def test_known_values(self):
        assert log_gamma(1.0) == pytest.approx(0.0, abs=1e-14)
        assert log_gamma(5.0) == pytest.approx(math.log(24.0), rel=1e-14)
        assert log_gamma(0.5) == pytest.approx(0.5 * math.log(math.pi), rel=1e-14)

    @pytest.mark.parametrize("x", [1e-3, 0.02, 0.9, 1.5, 7.3, 123.4, 9.9e5, 1e8])
    def test_precision_across_domain(self, x):
        import mpmath
        exact = float(mpmath.log(mpmath.gamma(x)))
        if exact == 0.0:
            assert abs(log_gamma(x)) <= 1e-12
        else:
            assert abs(log_gamma(x) - exact) / abs(exact) <= 1e-12

    @pytest.mark.parametrize("x", [0.0, -1.0, -0.5])
    def test_domain_error(self, x):
        with pytest.raises(ValueError):
            log_gamma(x)


class TestLogBinomial:
    def test_edges(self):
        assert log_binomial(7, 0) == 0.0
        assert log_binomial(7, 7) == 0.0
        assert log_binomial(5, 2) == pytest.approx(math.log(10.0), rel=1e-13)

    def test_against_exact_big_integer(self):
        # independent oracle: exact integer binomial
        exact = math.log(math.comb(100, 50))
        assert log_binomial(100, 50) == pytest.approx(exact, rel=1e-10)

    @pytest.mark.parametrize("n,r", [(1_000_000, 3), (1_000_000, 500_000), (10_000, 9_999)])
    def test_large_n(self, n, r):
        import mpmath
        exact = float(mpmath.log(mpmath.binomial(n, r)))
        assert abs(log_binomial(n, r) - exact) / abs(exact) <= 1e-10

    def test_domain_error(self):
        with pytest.raises(ValueError):
            log_binomial(5, 6)
        with pytest.raises(ValueError):
            log_binomial(-1, 0)

    @pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
    @pytest.mark.parametrize("n", [1, 7, 31, 60])
    def test_binomial_weights_sum_to_one(self, n, p):
        total = sum(math.exp(log_binomial(n, r)) * p**r * (1 - p) ** (n - r)
                    for r in range(n + 1))
        assert total == pytest.approx(1.0, abs=1e-10)


class TestLogSumExp:
    def test_known_values(self):
        assert log_sum_exp([0.0, 0.0]) == pytest.approx(math.log(2.0), abs=1e-15)
        assert log_sum_exp([LOG_ZERO, 3.7]) == pytest.approx(3.7, abs=1e-15)
        assert log_sum_exp([1000.0, 1000.0, 1000.0]) == pytest.approx(
            1000.0 + math.log(3.0), abs=1e-12)

    def test_all_log_zero(self):
        assert log_sum_exp([LOG_ZERO, LOG_ZERO]) == LOG_ZERO

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            log_sum_exp([])

    @given(st.lists(st.floats(min_value=-600, max_value=600), min_size=1, max_size=20),
           st.floats(min_value=-100, max_value=100))
    def test_shift_equivariance(self, terms, c):
        shifted = log_sum_exp([t + c for t in terms])
        assert shifted == pytest.approx(log_sum_exp(terms) + c, abs=1e-12)

    @given(st.lists(st.floats(min_value=-600, max_value=600), min_size=2, max_size=20),
           st.randoms())
    def test_permutation_invariance(self, terms, rnd):
        shuffled = list(terms)
        rnd.shuffle(shuffled)
        assert log_sum_exp(shuffled) == pytest.approx(log_sum_exp(terms), abs=1e-12)


class TestRegularizedLowerGamma:
    def test_exponential_cdf_special_case(self):
        for x in [0.1, 1.0, 2.5, 10.0]:
            assert regularized_lower_gamma(1.0, x) == pytest.approx(
                -math.expm1(-x), rel=1e-12)

    def test_zero(self):
        assert regularized_lower_gamma(3.0, 0.0) == 0.0

    def test_monte_carlo_cdf_oracle(self):
        # Pr[G <= 2.5], G ~ Gamma(shape 3, scale 1), via 1e6 draws
        rng = np.random.default_rng(20240817)
        n = 10**6
        draws = rng.gamma(3.0, 1.0, size=n)
        p_hat = float(np.mean(draws <= 2.5))
        se = math.sqrt(p_hat * (1 - p_hat) / n)
        assert abs(regularized_lower_gamma(3.0, 2.5) - p_hat) <= 3 * se

    @pytest.mark.parametrize("k", [0.3, 1.0, 2.7, 15.0, 420.0])
    def test_against_scipy(self, k):
        for x in np.geomspace(1e-3, 5 * k, 40):
            assert regularized_lower_gamma(k, float(x)) == pytest.approx(
                float(scipy.special.gammainc(k, x)), abs=1e-12)

    @given(st.floats(min_value=0.05, max_value=200),
           st.floats(min_value=0, max_value=500),
           st.floats(min_value=0, max_value=500))
    def test_monotone_and_bounded(self, k, x1, x2):
        lo, hi = sorted([x1, x2])
        p_lo = regularized_lower_gamma(k, lo)
        p_hi = regularized_lower_gamma(k, hi)
        assert 0.0 <= p_lo <= p_hi <= 1.0

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            regularized_lower_gamma(0.0, 1.0)
        with pytest.raises(ValueError):
            regularized_lower_gamma(2.0, -0.1)


class TestIntegrateDecaying:
    def test_exponential(self):
        assert integrate_decaying(lambda z: np.exp(-z), 0.0) == pytest.approx(1.0, rel=1e-8)

    def test_inverse_square(self):
        assert integrate_decaying(lambda z: (1.0 + z) ** -2, 0.0) == pytest.approx(1.0, rel=1e-8)

    def test_slow_tail_closed_form(self):
        # antiderivative of (1 + 0.01 z)^-10 gives 100/9
        got = integrate_decaying(lambda z: (1.0 + 0.01 * z) ** -10, 0.0)
        assert got == pytest.approx(100.0 / 9.0, rel=1e-8)

    def test_nonzero_lower_limit(self):
        got = integrate_decaying(lambda z: np.exp(-z), 2.0)
        assert got == pytest.approx(math.exp(-2.0), rel=1e-8)

    def test_divergent_raises(self):
        with pytest.raises(QuadratureError):
            integrate_decaying(lambda z: (1.0 + z) ** -1, 0.0, max_panels=200)


class TestLogValue:
    def test_rejects_nan_and_inf(self):
        with pytest.raises(ValueError):
            LogValue(float("nan"))
        with pytest.raises(ValueError):
            LogValue(float("inf"))

    def test_zero_round_trip(self):
        v = LogValue.from_linear(0.0)
        assert v.is_zero and v.to_linear() == 0.0

    def test_linear_round_trip(self):
        assert LogValue.from_linear(2.5).to_linear() == pytest.approx(2.5, rel=1e-15)
        with pytest.raises(ValueError):
            LogValue.from_linear(-1.0)
