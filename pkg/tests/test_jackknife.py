import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subforest import dataset, forest, jackknife, oracle, rng


def _random_counts(b, n, s, seed=0):
    gen = np.random.default_rng(seed)
    counts = np.zeros((b, n), dtype=np.uint8)
    for row in range(b):
        counts[row, gen.choice(n, s, replace=False)] = 1
    return counts


class TestCWeights:
    def test_two_subsample_hand_expansion(self):
        # n=2, s=1, B=2, subsamples {0}, {1}: C_0 = (t0 - t1)/4
        t0, t1 = 3.0, 7.0
        counts = np.array([[1, 0], [0, 1]])
        c = jackknife.c_weights([t0, t1], counts, 1, 2)
        assert c[0] == pytest.approx((t0 - t1) / 4, rel=1e-15)
        assert c[1] == pytest.approx((t1 - t0) / 4, rel=1e-15)

    def test_equal_outputs_zero(self):
        counts = _random_counts(6, 10, 3)
        assert np.array_equal(jackknife.c_weights(np.full(6, 2.5), counts, 3, 10), np.zeros(10))

    def test_constant_inclusion_gives_zero_weight(self):
        # if N_bi is the same for all b, C_i = 0 because sum_b (T_b - Tbar) = 0
        counts = np.ones((5, 4), dtype=np.uint8)  # s = 4 = n: every row full
        c = jackknife.c_weights(np.arange(5.0), counts, 4, 4)
        assert np.allclose(c, 0.0, atol=1e-12)

    def test_b_below_two_rejected(self):
        with pytest.raises(ValueError, match="B >= 2"):
            jackknife.c_weights(np.array([1.0]), np.array([[1, 0]]), 1, 2)


class TestVij:
    def test_all_equal_outputs(self):
        counts = _random_counts(8, 6, 2)
        est = jackknife.v_ij(np.full(8, 1.5), counts, 2, 6)
        assert est.plugin == 0.0 and est.v_hat == 0.0 and est.corrected == 0.0
        assert est.truncated == 0.0

    def test_correction_arithmetic(self):
        # n=10, s=3, B=7, outputs 1..7: v_hat = 4, correction = 2.1 * 4/7 = 1.2
        counts = _random_counts(7, 10, 3, seed=1)
        est = jackknife.v_ij(np.arange(1.0, 8.0), counts, 3, 10)
        assert est.v_hat == pytest.approx(4.0, rel=1e-15)
        assert est.correction == pytest.approx(3 * 7 / 10 * 4.0 / 7, rel=1e-15)
        assert est.corrected == est.plugin - est.correction
        assert est.truncated == max(est.corrected, 0.0)

    def test_monte_carlo_matches_enumeration(self):
        # n=6, s=2, subsample-mean learner: corrected at B=1e5 within 2% of exact
        ts = dataset.TrainingSet(
            np.arange(6, dtype=float).reshape(-1, 1) / 6, np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        )
        exact = oracle.exact_vij(ts, oracle.SubsampleMean(), 2)
        subsets, values = oracle.enumerate_subsamples(ts, oracle.SubsampleMean(), 2)
        table = np.zeros((subsets.shape[0], 6), dtype=np.uint8)
        table[np.arange(subsets.shape[0])[:, None], subsets] = 1
        gen = rng.stream(42, 99)
        ids = gen.integers(0, subsets.shape[0], size=10**5)
        est = jackknife.v_ij(values[ids], table[ids], 2, 6)
        assert est.corrected == pytest.approx(exact, rel=0.02)

    def test_batch_matches_single(self, cosine_1k):
        fm = forest.train(cosine_1k, forest.ForestConfig(b=50, seed=3))
        xs = np.random.default_rng(0).random((4, 2))
        batch = jackknife.variance_estimates(fm, xs)
        counts = fm.counts_matrix()
        per = forest.predict_per_tree(fm, xs)
        for k in range(4):
            single = jackknife.v_ij(per[:, k], counts, fm.s, fm.n)
            assert batch[k].plugin == pytest.approx(single.plugin, rel=1e-12)
            assert batch[k].corrected == pytest.approx(single.corrected, rel=1e-12)


class TestInvariances:
    @given(st.floats(min_value=0.25, max_value=4.0), st.integers(min_value=0, max_value=50))
    @settings(max_examples=25, deadline=None)
    def test_scale_equivariance(self, a, seed):
        gen = np.random.default_rng(seed)
        outputs = gen.standard_normal(12)
        counts = _random_counts(12, 8, 3, seed)
        base = jackknife.v_ij(outputs, counts, 3, 8)
        scaled = jackknife.v_ij(a * outputs, counts, 3, 8)
        assert scaled.plugin == pytest.approx(a * a * base.plugin, rel=1e-9)
        assert scaled.correction == pytest.approx(a * a * base.correction, rel=1e-9)
        assert scaled.corrected == pytest.approx(a * a * base.corrected, rel=1e-9, abs=1e-12)

    @given(st.floats(min_value=-50.0, max_value=50.0), st.integers(min_value=0, max_value=50))
    @settings(max_examples=25, deadline=None)
    def test_translation_invariance(self, shift, seed):
        gen = np.random.default_rng(seed)
        outputs = gen.standard_normal(12)
        counts = _random_counts(12, 8, 3, seed)
        base = jackknife.v_ij(outputs, counts, 3, 8)
        shifted = jackknife.v_ij(outputs + shift, counts, 3, 8)
        assert shifted.plugin == pytest.approx(base.plugin, rel=1e-7, abs=1e-12)
        assert shifted.corrected == pytest.approx(base.corrected, rel=1e-7, abs=1e-12)

    @given(st.integers(min_value=0, max_value=50))
    @settings(max_examples=25, deadline=None)
    def test_replicate_order_invariance(self, seed):
        gen = np.random.default_rng(seed)
        outputs = gen.standard_normal(10)
        counts = _random_counts(10, 7, 3, seed)
        perm = gen.permutation(10)
        base = jackknife.v_ij(outputs, counts, 3, 7)
        shuffled = jackknife.v_ij(outputs[perm], counts[perm], 3, 7)
        assert shuffled.plugin == pytest.approx(base.plugin, rel=1e-12)
        assert shuffled.corrected == pytest.approx(base.corrected, rel=1e-12, abs=1e-15)


class TestCorrectionUnbiasedness:
    def test_plugin_exceeds_exact_by_mean_correction(self):
        # over independent MC runs at small B, mean(corrected) approaches the
        # enumerated value while mean(plugin) exceeds it by ~ the correction
        ts = dataset.TrainingSet(
            np.arange(6, dtype=float).reshape(-1, 1) / 6, np.array([2.0, 4.0, 1.0, 6.0, 3.0, 5.0])
        )
        exact = oracle.exact_vij(ts, oracle.SubsampleMean(), 2)
        subsets, values = oracle.enumerate_subsamples(ts, oracle.SubsampleMean(), 2)
        table = np.zeros((subsets.shape[0], 6), dtype=np.uint8)
        table[np.arange(subsets.shape[0])[:, None], subsets] = 1
        b = 200
        corrected, plugin = [], []
        for seed in range(300):
            ids = rng.stream(seed, 7).integers(0, subsets.shape[0], size=b)
            est = jackknife.v_ij(values[ids], table[ids], 2, 6)
            corrected.append(est.corrected)
            plugin.append(est.plugin)
        corrected = np.array(corrected)
        plugin = np.array(plugin)
        se = corrected.std(ddof=1) / np.sqrt(corrected.size)
        assert abs(corrected.mean() - exact) < 4 * se
        predicted_gap = 2 * (6 - 2) / 6 * values.var() / b
        gap_se = (plugin - exact).std(ddof=1) / np.sqrt(plugin.size)
        assert abs((plugin.mean() - exact) - predicted_gap) < 4 * gap_se


class TestInterval:
    def test_zero_variance_zero_width(self):
        est = jackknife.VarianceEstimate(0.0, 0.0, 0.0, 0.0, 0.0, np.zeros(3))
        ci = jackknife.interval(1.5, est, 0.95)
        assert ci.half_width == 0.0 and not ci.degenerate
        assert ci.lo == ci.hi == 1.5

    def test_unit_variance_standard_quantile(self):
        est = jackknife.VarianceEstimate(1.0, 0.0, 1.0, 1.0, 0.0, np.zeros(3))
        ci = jackknife.interval(0.0, est, 0.95)
        assert ci.half_width == pytest.approx(1.959964, abs=1e-6)

    def test_negative_corrected_flags_degenerate(self):
        est = jackknife.VarianceEstimate(0.1, 0.3, -0.2, 0.0, 0.5, np.zeros(3))
        ci = jackknife.interval(2.0, est, 0.95)
        assert ci.degenerate and ci.half_width == 0.0

    def test_invalid_level(self):
        est = jackknife.VarianceEstimate(0.0, 0.0, 0.0, 0.0, 0.0, np.zeros(1))
        with pytest.raises(ValueError, match="level"):
            jackknife.interval(0.0, est, 1.0)
