import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multistable.stable import (INFINITE, MomentRatioSpec, StableParams, abs_moment, c_eta,
                                c_eta_closed_form, ratio_table, sample_sas, sin2_integral,
                                theoretical_ratio)


def mp_sin_integral(eta):
    """Independent oracle: mpmath oscillatory quadrature of int_0^inf x^-eta sin x dx."""
    f = lambda x: x ** (-eta) * mpmath.sin(x)
    return float(mpmath.quad(f, [0, 1]) + mpmath.quadosc(f, [1, mpmath.inf], omega=1))


def mp_sin2_integral(p):
    with mpmath.workdps(30):
        head = mpmath.quad(lambda u: u ** (1 - p) * (mpmath.sin(u) / u) ** 2, [0, 1])
        tail = 1 / (2 * mpmath.mpf(p)) - mpmath.quadosc(
            lambda u: u ** (-p - 1) * mpmath.cos(2 * u), [1, mpmath.inf], omega=2) / 2
        return float(head + tail)


class TestStableParams:
    @pytest.mark.parametrize("alpha", [0.0, 2.0, -1.0, 2.5, float("nan")])
    def test_rejects_out_of_range(self, alpha):
        with pytest.raises(ValueError):
            StableParams(alpha)

    def test_ratio_spec_invariants(self):
        with pytest.raises(ValueError):
            MomentRatioSpec(0.0, 1.0)
        with pytest.raises(ValueError):
            MomentRatioSpec(0.5, 0.4)


class TestSampler:
    def test_cauchy_median(self, rng):
        x = sample_sas(1.0, 10**6, rng)
        assert -0.01 <= np.median(x) <= 0.01

    def test_characteristic_function(self, rng):
        x = sample_sas(1.5, 10**6, rng)
        assert abs(np.mean(np.cos(x)) - math.exp(-1.0)) < 0.01

    def test_deterministic(self):
        a = sample_sas(1.3, 1000, np.random.default_rng(5))
        b = sample_sas(1.3, 1000, np.random.default_rng(5))
        assert np.array_equal(a, b)

    def test_count_zero(self, rng):
        assert sample_sas(1.2, 0, rng).shape == (0,)

    @pytest.mark.parametrize("alpha", [0.0, 2.0])
    def test_rejects_alpha(self, alpha, rng):
        with pytest.raises(ValueError):
            sample_sas(alpha, 10, rng)

    def test_alpha_one_is_tan_branch(self):
        x = sample_sas(1.0, 5, np.random.default_rng(1))
        assert np.all(np.isfinite(x))


class TestCEta:
    @pytest.mark.parametrize("eta, expected", [
        (1.0, 2 / math.pi),
        (0.5, math.sqrt(2 / math.pi)),
        (1.5, 1 / math.sqrt(2 * math.pi)),
    ])
    def test_known_values(self, eta, expected):
        assert c_eta(eta) == pytest.approx(1.0 / mp_sin_integral(eta), rel=1e-9)
        assert c_eta(eta) == pytest.approx(expected, rel=1e-9)

    @pytest.mark.parametrize("eta", [0.3, 0.7, 1.0, 1.3, 1.9])
    def test_matches_closed_form(self, eta):
        assert abs(c_eta(eta) - c_eta_closed_form(eta)) < 1e-6

    def test_continuous_across_one(self):
        vals = [c_eta(1 + d) for d in (-1e-6, 0.0, 1e-6)]
        assert max(vals) - min(vals) < 1e-5

    @pytest.mark.parametrize("eta", [0.0, 2.0, -0.1])
    def test_rejects(self, eta):
        with pytest.raises(ValueError):
            c_eta(eta)


class TestAbsMoment:
    @pytest.mark.parametrize("p", [0.2, 0.9, 1.7])
    def test_sin2_integral_against_mpmath(self, p):
        assert sin2_integral(p) == pytest.approx(mp_sin2_integral(p), rel=1e-8)
        closed = -(2 ** (p - 1)) * math.gamma(-p) * math.cos(math.pi * p / 2)
        assert sin2_integral(p) == pytest.approx(closed, rel=1e-8)

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 1.9])
    def test_small_p_limit(self, alpha):
        assert 0.99 <= abs_moment(alpha, 0.001) <= 1.01

    def test_cauchy_half_moment(self):
        oracle = float(2 / mpmath.pi * mpmath.quad(lambda x: mpmath.sqrt(x) / (1 + x**2), [0, 1, mpmath.inf]))
        assert abs_moment(1.0, 0.5) == pytest.approx(oracle, abs=1e-8)
        assert abs_moment(1.0, 0.5) == pytest.approx(math.sqrt(2), abs=1e-8)

    def test_first_moment_alpha_1p5(self):
        # Monte-Carlo oracle (10^7 draws, substream(1, 0)) gave 1.70212; the value is
        # also 2 Gamma(1 - 1/alpha) / pi in closed form.
        v = abs_moment(1.5, 1.0)
        assert v == pytest.approx(1.7054652401523884, rel=1e-8)
        assert abs(v / 1.70211804475869 - 1) < 0.005

    def test_infinite(self):
        assert abs_moment(1.2, 1.2) is INFINITE
        assert math.isinf(abs_moment(1.2, 1.5))

    def test_rejects_nonpositive_p(self):
        with pytest.raises(ValueError):
            abs_moment(1.2, 0.0)

    @pytest.mark.parametrize("alpha", [0.8, 1.2, 1.8])
    def test_divergence(self, alpha):
        assert abs_moment(alpha, alpha - 1e-3) > 10 * abs_moment(alpha, alpha - 1e-1)

    def test_power_mean_monotone(self):
        alpha = 1.6
        ps = np.linspace(0.2, 1.59, 40)
        norms = [abs_moment(alpha, p) ** (1 / p) for p in ps]
        assert np.all(np.diff(norms) >= -1e-12)


class TestTheoreticalRatio:
    def test_at_p0(self):
        assert theoretical_ratio(1.5, MomentRatioSpec(0.2, 0.2)) == 1.0

    def test_indicator(self):
        assert theoretical_ratio(1.5, MomentRatioSpec(0.2, 1.7)) == 0.0
        assert theoretical_ratio(1.5, MomentRatioSpec(0.2, 1.5)) == 0.0
        assert theoretical_ratio(0.1, MomentRatioSpec(0.2, 0.2)) == 0.0

    def test_composition(self):
        expected = abs_moment(1.5, 0.2) ** 5 / abs_moment(1.5, 1.0)
        assert abs(theoretical_ratio(1.5, MomentRatioSpec(0.2, 1.0)) - expected) < 1e-6

    @pytest.mark.parametrize("alpha", [-0.1, 2.1])
    def test_rejects(self, alpha):
        with pytest.raises(ValueError):
            theoretical_ratio(alpha, MomentRatioSpec(0.2, 1.0))

    @settings(max_examples=50, deadline=None)
    @given(alpha=st.floats(0.25, 2.0), p=st.floats(0.2, 1.99), q=st.floats(0.2, 1.99))
    def test_nonincreasing_in_p(self, alpha, p, q):
        p, q = sorted((p, q))
        rp = theoretical_ratio(alpha, MomentRatioSpec(0.2, p))
        rq = theoretical_ratio(alpha, MomentRatioSpec(0.2, q))
        assert rq <= rp + 1e-12
        assert 0.0 <= rq <= 1.0 + 1e-12

    def test_table_rows(self):
        ps = np.linspace(0.2, 2.0, 7)
        table = ratio_table(0.2, ps, np.linspace(0, 2, 5))
        assert table.shape == (5, 7)
        assert np.all(table[0] == 0) and np.all(table[:, -1] == 0)
        assert table[3, 0] == 1.0  # alpha = 1.5
        assert not table.flags.writeable
