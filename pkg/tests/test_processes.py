import math
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from multistable.indexfn import IndexFunction, parse_index_function
from multistable.processes import (DegenerateKernelWarning, cumulative_demean,
                                   levy_multistable_fkl, levy_multistable_increments, lmmm,
                                   lmmm_measure, lmmm_shell_probabilities)
from multistable.stable import sample_sas

FIG1 = IndexFunction("affine", (1.98, -0.96))


class TestLevyIncrements:
    def test_scaled_increments_are_stable(self):
        N = 100_000
        path = levy_multistable_increments(parse_index_function("1.5"), N, np.random.default_rng(5))
        scaled = path.increments() * N ** (1 / 1.5)
        ref = sample_sas(1.5, 100_000, np.random.default_rng(6))
        assert stats.ks_2samp(scaled, ref).pvalue > 0.01

    def test_figure1_length(self, rng):
        path = levy_multistable_increments(FIG1, 20_000, rng)
        assert len(path.values) == 20_001 and path.values[0] == 0.0
        assert np.all(np.isfinite(path.values))

    def test_smallest_resolution(self, rng):
        path = levy_multistable_increments(parse_index_function("1.2"), 2, rng)
        assert len(path.values) == 3 and path.values[0] == 0.0
        assert len(path.increments()) == 2

    @pytest.mark.parametrize("text", ["0.9", "2.0", "affine:0.9,0.5"])
    def test_rejects_alpha_outside_one_two(self, rng, text):
        with pytest.raises(ValueError):
            levy_multistable_increments(parse_index_function(text), 100, rng)

    def test_rejects_small_n(self, rng):
        with pytest.raises(ValueError):
            levy_multistable_increments(parse_index_function("1.5"), 1, rng)

    def test_determinism(self):
        a = levy_multistable_increments(FIG1, 1000, np.random.default_rng(42)).values
        b = levy_multistable_increments(FIG1, 1000, np.random.default_rng(42)).values
        assert np.array_equal(a, b)

    def test_shuffled_increments_keep_endpoint_law(self):
        rng = np.random.default_rng(8)
        plain, shuffled = [], []
        for _ in range(1000):
            inc = levy_multistable_increments(parse_index_function("1.5"), 64, rng).increments()
            plain.append(inc[:32].sum())
            shuffled.append(rng.permutation(inc)[:32].sum())
        assert stats.ks_2samp(plain, shuffled).pvalue > 0.01


class TestLevyFkl:
    def test_starts_at_zero(self, rng):
        path = levy_multistable_fkl(parse_index_function("1.5"), 256, n_terms=2048, rng=rng)
        assert path.values[0] == 0.0

    def test_piecewise_constant(self, rng):
        # with 50 atoms at most 50 of the 4096 grid steps can move
        path = levy_multistable_fkl(parse_index_function("1.5"), 4096, n_terms=50, rng=rng)
        assert np.count_nonzero(path.increments()) <= 50

    def test_varying_alpha_route(self, rng):
        alpha = parse_index_function("affine:1.2,0.6")
        path = levy_multistable_fkl(alpha, 200, n_terms=4096, rng=rng)
        assert path.values[0] == 0.0 and np.all(np.isfinite(path.values))

    def test_constant_fast_path_matches_field(self):
        # a constant affine function goes through the generic diagonal evaluation
        fast = levy_multistable_fkl(parse_index_function("1.5"), 128, n_terms=4096,
                                    rng=np.random.default_rng(2)).values
        slow = levy_multistable_fkl(IndexFunction("affine", (1.5, 0.0), declared_range=(1.4, 1.6)),
                                    128, n_terms=4096, rng=np.random.default_rng(2)).values
        np.testing.assert_allclose(fast, slow, rtol=1e-9, atol=1e-12)

    def test_jobs_independent(self):
        alpha = parse_index_function("affine:1.2,0.6")
        a = levy_multistable_fkl(alpha, 300, n_terms=2**15, rng=np.random.default_rng(3), jobs=1)
        b = levy_multistable_fkl(alpha, 300, n_terms=2**15, rng=np.random.default_rng(3), jobs=2)
        assert np.array_equal(a.values, b.values)


class TestLmmm:
    def test_degenerate_kernel(self, rng):
        with pytest.warns(DegenerateKernelWarning):
            path = lmmm(parse_index_function("1.25"), parse_index_function("0.8"), 100,
                        n_terms=256, rng=rng)
        assert np.all(path.values == 0.0)

    def test_rejects_negative_exponent(self, rng):
        with pytest.raises(ValueError):
            lmmm(parse_index_function("1.5"), parse_index_function("0.6"), 100, n_terms=64, rng=rng)

    def test_shell_probabilities_sum(self):
        p = lmmm_shell_probabilities(10**6)
        assert p.sum() == pytest.approx(1.0)
        j = np.arange(1, 6)
        np.testing.assert_allclose(p[:5], 6 / (math.pi**2 * j**2), rtol=1e-5)

    def test_shell_frequencies(self):
        x = lmmm_measure().sampler(np.random.default_rng(12), 10**6)
        j = np.floor(np.abs(x)).astype(int) + 1
        n = len(x)
        for shell in range(1, 6):
            p = 6 / (math.pi**2 * shell**2)
            sigma = math.sqrt(n * p * (1 - p))
            assert abs(np.sum(j == shell) - n * p) <= 3 * sigma

    def test_shell_sides_balanced(self):
        x = lmmm_measure().sampler(np.random.default_rng(13), 10**5)
        assert abs(np.mean(x < 0) - 0.5) < 3 * 0.5 / math.sqrt(10**5)

    def test_weights(self):
        m = lmmm_measure()
        p = lmmm_shell_probabilities()
        np.testing.assert_allclose(m.weight(np.array([0.5, -0.5, 2.5, -3.2])),
                                   2 / p[[0, 0, 2, 3]])

    def test_figure4_row1_valid(self):
        path = lmmm(parse_index_function("affine:1.41,0.57"),
                    parse_index_function("sinusoidal:0.725,0.175"), 2000,
                    n_terms=2**12, rng=np.random.default_rng(1))
        assert len(path.values) == 2001 and path.values[0] == 0.0
        assert np.all(np.isfinite(path.values))

    def test_stationary_increment_dispersion(self):
        a, h = parse_index_function("1.6"), parse_index_function("0.8")
        ratios = []
        for seed in range(6):
            inc = lmmm(a, h, 2000, n_terms=2**12, rng=np.random.default_rng(seed)).increments()
            first, second = np.median(np.abs(inc[:1000])), np.median(np.abs(inc[1000:]))
            ratios.append(math.log(first / second))
        assert abs(np.median(ratios)) < 0.25

    def test_determinism_and_jobs(self):
        a, h = parse_index_function("affine:1.41,0.57"), parse_index_function("sinusoidal:0.725,0.175")
        p1 = lmmm(a, h, 500, n_terms=2**12, rng=np.random.default_rng(4), jobs=1)
        p2 = lmmm(a, h, 500, n_terms=2**12, rng=np.random.default_rng(4), jobs=2)
        assert np.array_equal(p1.values, p2.values)


class TestCumulativeDemean:
    def test_arithmetic(self):
        np.testing.assert_array_equal(cumulative_demean([1, 2, 3]).values, [0, -1, -1, 0])

    def test_constant(self):
        assert np.all(cumulative_demean([4.2] * 50).values == 0.0)

    def test_resolution(self):
        path = cumulative_demean(np.arange(10.0))
        assert path.resolution == 10 and len(path.values) == 11

    @pytest.mark.parametrize("bad", [[], [1.0]])
    def test_rejects_short(self, bad):
        with pytest.raises(ValueError):
            cumulative_demean(bad)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=200))
    def test_final_value_is_zero(self, z):
        y = cumulative_demean(z).values
        assert y[0] == 0.0 and y[-1] == 0.0
