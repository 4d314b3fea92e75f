import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from msfilter.stats import gaussian_cdf, histogram, kolmogorov_sf, ks_test, summarize


class TestSummarize:
    def test_examples(self):
        assert summarize([1, 1, 1]) == (1.0, 0.0, 3)
        m, s, n = summarize([0, 2])
        assert (m, n) == (1.0, 2) and s == pytest.approx(math.sqrt(2))

    def test_large_normal(self):
        m, s, n = summarize(np.random.default_rng(0).standard_normal(10**6))
        assert abs(m) < 0.004 and 0.996 <= s <= 1.004 and n == 10**6

    def test_too_few(self):
        with pytest.raises(ValueError):
            summarize([1.0])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=40), st.floats(-50, 50), st.floats(-5, 5))
    def test_affine(self, x, a, b):
        x = np.array(x)
        s = summarize(x)[1]
        assert summarize(a + b * x)[1] == pytest.approx(abs(b) * s, rel=1e-9, abs=1e-9)


class TestKs:
    def test_single_atom(self):
        r = ks_test([0.5], lambda x: np.clip(x, 0, 1))
        assert r.statistic == 0.5 and r.n == 1 and 0 <= r.p_value <= 1

    @pytest.mark.parametrize("n", [1, 10, 257])
    def test_quantile_samples(self, n):
        q = (np.arange(1, n + 1) - 0.5) / n
        assert ks_test(q, lambda x: x).statistic == pytest.approx(1 / (2 * n), abs=1e-15)

    def test_matches_scipy(self):
        x = np.random.default_rng(5).normal(0.1, 1.0, 400)
        ours = ks_test(x, gaussian_cdf)
        ref = sps.kstest(x, "norm", method="asymp")
        assert ours.statistic == pytest.approx(ref.statistic, abs=1e-12)
        assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-3)

    @pytest.mark.parametrize("t", [0.2, 0.5, 0.8, 0.99, 1.0, 1.2, 2.0, 3.0])
    def test_kolmogorov_sf_matches_scipy(self, t):
        assert kolmogorov_sf(t) == pytest.approx(sps.kstwobign.sf(t), rel=1e-9, abs=1e-15)

    def test_level(self):
        passes = 0
        for seed in range(100):
            x = np.random.default_rng(seed).standard_normal(10_000)
            passes += ks_test(x, gaussian_cdf).p_value > 0.001
        assert passes >= 99

    def test_rank_invariance(self):
        x = np.random.default_rng(2).standard_normal(300)
        a = ks_test(x, gaussian_cdf).statistic
        b = ks_test(np.exp(x), lambda y: gaussian_cdf(np.log(y))).statistic
        assert a == pytest.approx(b, abs=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            ks_test([], gaussian_cdf)
        with pytest.raises(ValueError):
            ks_test([0.0, math.inf], gaussian_cdf)


class TestGaussianCdf:
    def test_values(self):
        assert gaussian_cdf(2.0, 2.0, 3.0) == 0.5
        assert gaussian_cdf(1.5, 0.5, 1.0) == pytest.approx(0.841344746, abs=1e-9)
        assert gaussian_cdf(-1e300) == 0.0

    def test_against_scipy(self):
        x = np.linspace(-6, 6, 101)
        np.testing.assert_allclose(gaussian_cdf(x), sps.norm.cdf(x), rtol=1e-12)

    def test_bad_std(self):
        with pytest.raises(ValueError):
            gaussian_cdf(0.0, 0.0, 0.0)


class TestHistogram:
    def test_two_bins(self):
        edges, counts = histogram([0, 1, 2, 3], 2)
        assert list(counts) == [2, 2] and list(edges) == [0.0, 1.5, 3.0]

    def test_all_equal(self):
        edges, counts = histogram([4.0] * 7, 5)
        assert counts.sum() == 7 and np.count_nonzero(counts) == 1
        assert edges[0] < 4.0 < edges[-1]

    def test_uniform_counts(self):
        x = np.random.default_rng(9).uniform(size=10**5)
        _, counts = histogram(x, 10)
        sigma = math.sqrt(10**5 * 0.1 * 0.9)
        assert np.all(np.abs(counts - 10**4) < 5 * sigma)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200), st.integers(1, 50))
    def test_invariants(self, x, bins):
        edges, counts = histogram(x, bins)
        assert counts.sum() == len(x)
        assert np.all(np.diff(edges) > 0)

    def test_errors(self):
        with pytest.raises(ValueError):
            histogram([], 3)
        with pytest.raises(ValueError):
            histogram([1.0], 0)
