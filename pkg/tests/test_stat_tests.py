import numpy as np
import pytest

from adascore.errors import TooFewSamples
from adascore.stat_tests import (
    TestResult,
    kernel_independence_test,
    permutation_independence_test,
    t_test_zero_mean,
)


class TestTTest:
    def test_all_zero(self):
        r = t_test_zero_mean(np.zeros(10))
        assert r.p_value == 1.0 and not r.rejected

    def test_nonzero_constant(self):
        r = t_test_zero_mean(np.full(10, 0.5))
        assert r.p_value == 0.0 and r.rejected

    def test_strong_mean(self):
        x = np.random.default_rng(0).normal(1, 0.1, 100)
        assert t_test_zero_mean(x).p_value < 1e-6

    def test_matches_closed_form(self):
        from scipy import stats

        x = np.random.default_rng(1).normal(0.1, 1, 50)
        t = x.mean() / (x.std(ddof=1) / np.sqrt(50))
        assert t_test_zero_mean(x).p_value == pytest.approx(2 * stats.t.sf(abs(t), 49))

    def test_too_short(self):
        with pytest.raises(TooFewSamples):
            t_test_zero_mean([1.0])

    @pytest.mark.slow
    def test_calibration(self):
        rng = np.random.default_rng(2)
        rate = np.mean([t_test_zero_mean(rng.normal(size=10_000)).rejected for _ in range(200)])
        assert 0.02 <= rate <= 0.09

    def test_rejected_flag_matches_level(self):
        x = np.random.default_rng(3).normal(0.2, 1, 60)
        r = t_test_zero_mean(x, 0.05)
        assert r.rejected == (r.p_value < 0.05)
        assert TestResult.at_level(1.0, 0.2, 0.1).rejected is False


class TestHsic:
    def test_constant_input(self):
        y = np.random.default_rng(0).normal(size=50)
        assert kernel_independence_test(np.ones(50), y).p_value == 1.0
        assert kernel_independence_test(y, np.ones((50, 2))).p_value == 1.0

    def test_self_dependence(self):
        x = np.random.default_rng(1).normal(size=500)
        assert kernel_independence_test(x, x).p_value < 1e-4

    def test_too_few(self):
        with pytest.raises(TooFewSamples):
            kernel_independence_test(np.arange(10.0), np.arange(10.0))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            kernel_independence_test(np.zeros(30), np.zeros(31))

    @pytest.mark.slow
    def test_null_rejection_rate(self):
        rng = np.random.default_rng(2)
        rate = np.mean([
            kernel_independence_test(rng.normal(size=500), rng.normal(size=500)).rejected
            for _ in range(200)
        ])
        assert 0.01 <= rate <= 0.10

    def test_reordering_invariance(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=200)
        y = np.column_stack([x**2 + rng.normal(size=200), rng.normal(size=200)])
        p = rng.permutation(200)
        a, b = kernel_independence_test(x, y), kernel_independence_test(x[p], y[p])
        assert a.p_value == pytest.approx(b.p_value) and a.statistic == pytest.approx(b.statistic)

    def test_affine_scaling_invariance(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=300)
        y = 0.3 * x + rng.normal(size=300)
        a = kernel_independence_test(x, y).p_value
        b = kernel_independence_test(5 * x - 2, 0.1 * y + 7).p_value
        assert abs(a - b) <= 0.02

    def test_monotone_in_dependence(self):
        rng = np.random.default_rng(5)
        x, e = rng.normal(size=300), rng.normal(size=300)
        ps = [kernel_independence_test(x, x + s * e).p_value for s in (8.0, 4.0, 2.0)]
        assert ps[0] >= ps[1] >= ps[2]

    def test_agrees_with_permutation_null(self):
        rng = np.random.default_rng(6)
        for k in range(5):
            x = rng.normal(size=150)
            y = 0.15 * k * x + rng.normal(size=150)
            gamma_p = kernel_independence_test(x, y).p_value
            perm_p = permutation_independence_test(x, y, shuffles=500, seed=k).p_value
            assert abs(gamma_p - perm_p) <= 0.05
