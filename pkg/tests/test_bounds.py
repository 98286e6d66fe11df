import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from condcover.bounds import (
    BoundQuery,
    bernstein_gamma,
    compute_bound,
    dkw_epsilon,
    group_deviation,
    group_deviation_probability,
    hoeffding_failure_prob,
    hoeffding_gamma,
    randomized_weighted_epsilon,
    sharp_bounds,
    weighted_coverage_bounds,
)
from condcover.errors import InvalidInputError


def bernstein_oracle(n, alpha, delta):
    # written out from the definition, independently of the module
    L = math.log(1 / delta)
    a = 4 * L / (3 * n)
    return a + math.sqrt(a**2 + 2 * alpha * (1 - alpha) * L / n)


class TestHoeffding:
    def test_value(self):
        assert hoeffding_failure_prob(1000, 0.05) == pytest.approx(0.006737946999, rel=1e-9)

    def test_zero_gamma(self):
        assert hoeffding_failure_prob(10, 0.0) == 1.0

    def test_inverse(self):
        assert hoeffding_gamma(1000, 0.05) == pytest.approx(math.sqrt(math.log(20) / 2000), rel=1e-14)
        assert hoeffding_gamma(1000, 0.05) == pytest.approx(0.03870, abs=1e-5)
        assert hoeffding_failure_prob(1000, hoeffding_gamma(1000, 0.05)) == pytest.approx(0.05)

    def test_negative_gamma(self):
        with pytest.raises(InvalidInputError):
            hoeffding_failure_prob(10, -0.1)


class TestBernstein:
    def test_value(self):
        g = bernstein_gamma(1000, 0.1, 0.05)
        assert g.gamma == pytest.approx(0.0275567, abs=1e-6)
        assert g.gamma == pytest.approx(bernstein_oracle(1000, 0.1, 0.05), rel=1e-14)

    def test_delta_one_limit(self):
        assert bernstein_gamma(100, 0.1, 1 - 1e-15).gamma == pytest.approx(0.0, abs=1e-6)

    @pytest.mark.parametrize("alpha", [0.0, 1.0])
    def test_extreme_alpha_drops_variance(self, alpha):
        g = bernstein_gamma(1000, alpha, 0.05)
        assert g.gamma == pytest.approx(8 * math.log(20) / 3000)

    @pytest.mark.parametrize("delta", [0.0, 1.0, 1.5])
    def test_bad_delta(self, delta):
        with pytest.raises(InvalidInputError):
            bernstein_gamma(10, 0.1, delta)

    def test_dense_grid_below_upper(self):
        for n in np.unique(np.logspace(0, 6, 10).astype(int)):
            for alpha in np.linspace(0, 1, 10):
                for delta in np.linspace(0.001, 0.999, 10):
                    g = bernstein_gamma(int(n), float(alpha), float(delta))
                    assert g.gamma <= g.upper


class TestDKW:
    def test_value(self):
        assert dkw_epsilon(100, 0.05) == pytest.approx(math.sqrt(math.log(40) / 200))
        assert dkw_epsilon(100, 0.05) == pytest.approx(0.1358, abs=1e-4)

    def test_quadrupling_n_halves(self):
        assert dkw_epsilon(400, 0.05) == pytest.approx(dkw_epsilon(100, 0.05) / 2)

    def test_inverse_at_one(self):
        n = 5
        assert dkw_epsilon(n, 2 * math.exp(-2 * n)) == pytest.approx(1.0)


class TestGroup:
    def test_value(self):
        assert group_deviation(2000, 20, 0.0, 0.5) == pytest.approx(8 * math.sqrt(0.01 * math.log(100)))
        assert group_deviation(2000, 20, 0.0, 0.5) == pytest.approx(1.7168, abs=1e-4)

    def test_n_equals_d(self):
        assert group_deviation(7, 7, 0.1, 0.25) == pytest.approx(4 * 0.1 / 0.25)

    @pytest.mark.parametrize("mass", [0.0, -0.1, 1.5])
    def test_bad_mass(self, mass):
        with pytest.raises(InvalidInputError):
            group_deviation(100, 2, 0.1, mass)

    def test_n_below_d(self):
        with pytest.raises(InvalidInputError):
            group_deviation(3, 5, 0.1, 0.5)

    def test_vacuous_flag(self):
        out = compute_bound("group", BoundQuery(n=2000, d=20, t=0.0, group_mass=1e-3))
        assert out["vacuous"]

    def test_probability(self):
        assert group_deviation_probability(100, 0.1) == pytest.approx(1 - math.exp(-1))


class TestWeightedAndSharp:
    def test_weighted_constants(self):
        lo, hi = weighted_coverage_bounds(1000, 4, 0.0, 0.1, 1.0)
        r = math.sqrt(4 / 1000 * math.log(250))
        assert lo == pytest.approx((2 + 0.1 / 2) * r)
        assert hi == pytest.approx(3 * (r + 4 / 3000))

    def test_randomized(self):
        assert randomized_weighted_epsilon(100, 1, 0.0, 2.0) == pytest.approx(3 * 2 * (math.sqrt(math.log(100) / 100) + 0.01))

    def test_sharp_value(self):
        sb = sharp_bounds(10000, 10, 3.0, 0.1, 1.0, 1.0, 0.5)
        m = 10 * math.log(10000) + 3
        assert sb.one_sided == pytest.approx(math.sqrt(0.05) * math.sqrt(m / 10000) + m / 10000)
        assert sb.two_sided == pytest.approx(math.sqrt(0.1) * math.sqrt(m / 10000) + m / 10000)
        assert sb.one_sided < sb.two_sided
        assert sb.k_n == pytest.approx(1 + math.log2(10000))

    def test_sharp_zero_mean_weight(self):
        sb = sharp_bounds(100, 2, 1.0, 0.1, 2.0, 1.0, 0.0)
        assert sb.one_sided == pytest.approx(2.0 * (2 * math.log(100) + 1) / 100)

    def test_sharp_domain(self):
        with pytest.raises(InvalidInputError):
            sharp_bounds(1, 1, 0.0, 0.1, 1.0, 1.0, 0.5)

    def test_compute_missing_parameter(self):
        with pytest.raises(InvalidInputError):
            compute_bound("weighted", BoundQuery(n=10, d=1))

    def test_compute_unknown(self):
        with pytest.raises(InvalidInputError):
            compute_bound("nope", BoundQuery(n=10))


class TestMonotonicity:
    @given(st.integers(1, 10**5), st.integers(1, 10**5), st.floats(0.001, 0.999))
    def test_nonincreasing_in_n(self, n1, n2, delta):
        lo, hi = sorted((n1, n2))
        assert hoeffding_gamma(hi, delta) <= hoeffding_gamma(lo, delta)
        assert dkw_epsilon(hi, delta) <= dkw_epsilon(lo, delta)
        assert bernstein_gamma(hi, 0.1, delta).gamma <= bernstein_gamma(lo, 0.1, delta).gamma

    @given(st.integers(1, 10**4), st.floats(0.001, 0.998), st.floats(0.001, 0.998))
    def test_nondecreasing_in_log_inverse_delta(self, n, d1, d2):
        small, big = sorted((d1, d2))
        assert hoeffding_gamma(n, small) >= hoeffding_gamma(n, big)
        assert bernstein_gamma(n, 0.2, small).gamma >= bernstein_gamma(n, 0.2, big).gamma

    @given(st.integers(1, 30), st.integers(1, 30), st.floats(0, 1))
    def test_group_monotone_on_grid(self, d1, d2, t):
        # the rate sqrt((d/n) log(n/d)) rises in d and falls in n once n >= e*d
        lo, hi = sorted((d1, d2))
        n = 3 * hi
        assert group_deviation(n, lo, t, 0.3) <= group_deviation(n, hi, t, 0.3) + 1e-15
        assert group_deviation(4 * n, hi, t, 0.3) <= group_deviation(n, hi, t, 0.3)
