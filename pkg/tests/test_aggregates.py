import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pgfdb import (
    AtLeastOne,
    ContractError,
    CountUda,
    DegreeOverflowError,
    GammaMixture,
    MinMaxUda,
    MomentsUda,
    NormalApprox,
    NormalUda,
    SumUda,
    at_least_one,
    stretch,
)
from tests.conftest import READINGS_PROBS, READINGS_VALUES, dist_dict

POS_INF = math.inf
NEG_INF = -math.inf


class TestAtLeastOne:
    def test_readings_existence(self):
        assert at_least_one(READINGS_PROBS) == pytest.approx(0.97)

    def test_empty_is_zero(self):
        assert at_least_one([]) == 0.0

    def test_certain_tuple_dominates(self):
        assert at_least_one([0.2, 1.0, 0.4]) == 1.0

    def test_merge_matches_single_pass(self):
        a, b = AtLeastOne(), AtLeastOne()
        a.accumulate(0.3)
        b.accumulate(0.6)
        b.accumulate(0.1)
        a.merge(b)
        assert a.finalize() == pytest.approx(at_least_one([0.3, 0.6, 0.1]))


class TestCount:
    def test_readings_distribution(self):
        state = CountUda()
        for p in READINGS_PROBS:
            state.accumulate(p)
        coeffs = state.finalize().coeffs
        assert np.abs(coeffs - [0.03, 0.22, 0.47, 0.28]).max() < 1e-12

    def test_empty_count_is_zero(self):
        assert CountUda().finalize().to_pgf().items() == ((0, 1.0),)

    def test_certain_tuples_shift(self):
        state = CountUda()
        state.accumulate(1.0)
        state.accumulate(1.0)
        state.accumulate(0.5)
        assert dist_dict(state.finalize().to_pgf()) == pytest.approx(
            {2: 0.5, 3: 0.5}
        )

    def test_impossible_tuples_ignored(self):
        state = CountUda()
        state.accumulate(0.0)
        state.accumulate(0.5)
        assert dist_dict(state.finalize().to_pgf()) == pytest.approx(
            {0: 0.5, 1: 0.5}
        )

    def test_probability_range_checked(self):
        with pytest.raises(ValueError):
            CountUda().accumulate(1.5)

    def test_merge_requires_same_settings(self):
        a = CountUda(fft_threshold=100)
        b = CountUda(fft_threshold=200)
        with pytest.raises(ContractError):
            a.merge(b)

    def test_overflow_guard(self):
        state = CountUda(max_degree=3)
        for _ in range(5):
            state.accumulate(0.5)
        with pytest.raises(DegreeOverflowError, match="approximation"):
            state.finalize()

    def test_accumulate_many_matches_loop(self):
        rng = np.random.default_rng(2)
        probs = rng.uniform(size=40)
        a = CountUda()
        a.accumulate_many(probs)
        b = CountUda()
        for p in probs:
            b.accumulate(float(p))
        assert np.abs(a.finalize().coeffs - b.finalize().coeffs).max() < 1e-12


class TestStretch:
    def test_interleaves_zeros(self):
        out = stretch(np.array([0.5, 0.3, 0.2]), 3)
        assert np.array_equal(out, [0.5, 0, 0, 0.3, 0, 0, 0.2])

    def test_alpha_one_is_identity(self):
        out = stretch(np.array([0.4, 0.6]), 1)
        assert np.array_equal(out, [0.4, 0.6])


class TestSum:
    def test_readings_distribution(self):
        state = SumUda()
        for p, v in zip(READINGS_PROBS, READINGS_VALUES):
            state.accumulate(p, v)
        expected = {0: 0.03, 3: 0.07, 5: 0.03, 8: 0.19, 11: 0.28, 13: 0.12, 16: 0.28}
        assert dist_dict(state.finalize()) == pytest.approx(expected, abs=1e-12)

    def test_negative_values(self):
        state = SumUda()
        state.accumulate(0.5, 3)
        state.accumulate(0.5, -5)
        expected = {-5: 0.25, -2: 0.25, 0: 0.25, 3: 0.25}
        assert dist_dict(state.finalize()) == pytest.approx(expected)

    def test_certain_values_become_offset(self):
        state = SumUda()
        state.accumulate(1.0, 4)
        state.accumulate(0.5, 3)
        assert dist_dict(state.finalize()) == pytest.approx({4: 0.5, 7: 0.5})

    def test_zero_values_do_not_grow_support(self):
        state = SumUda()
        state.accumulate(0.3, 0)
        state.accumulate(0.5, 2)
        assert dist_dict(state.finalize()) == pytest.approx({0: 0.5, 2: 0.5})

    def test_scaled_values(self):
        state = SumUda(scale_digits=1)
        state.accumulate(1.0, 0.5)
        state.accumulate(1.0, 0.3)
        assert state.finalize().display_items() == ((0.8, 1.0),)

    def test_empty_sum_is_zero(self):
        assert SumUda().finalize().items() == ((0, 1.0),)

    def test_repeated_value_groups_use_counts(self):
        # five tuples of the same value: support must be the multiples
        state = SumUda()
        for _ in range(5):
            state.accumulate(0.5, 7)
        d = state.finalize()
        assert d.support() == (0, 7, 14, 21, 28, 35)
        assert d.mass_at_key(35) == pytest.approx(0.5**5)

    def test_support_size_guard(self):
        state = SumUda(max_degree=10)
        state.accumulate(0.5, 20)
        with pytest.raises(DegreeOverflowError, match="approximation"):
            state.finalize()


class TestMinMax:
    def test_readings_min(self):
        state = MinMaxUda("min")
        for p, v in zip(READINGS_PROBS, READINGS_VALUES):
            state.accumulate(p, v)
        expected = {3: 0.7, 5: 0.15, 8: 0.12, POS_INF: 0.03}
        assert dist_dict(state.finalize()) == pytest.approx(expected)

    def test_readings_max(self):
        state = MinMaxUda("max")
        for p, v in zip(READINGS_PROBS, READINGS_VALUES):
            state.accumulate(p, v)
        expected = {8: 0.8, 5: 0.1, 3: 0.07, NEG_INF: 0.03}
        assert dist_dict(state.finalize()) == pytest.approx(expected)

    def test_duplicate_values_combine(self):
        state = MinMaxUda("min")
        state.accumulate(0.5, 4)
        state.accumulate(0.5, 4)
        assert dist_dict(state.finalize()) == pytest.approx({4: 0.75, POS_INF: 0.25})

    def test_certain_value_caps_tail(self):
        state = MinMaxUda("min")
        state.accumulate(1.0, 9)
        state.accumulate(0.4, 2)
        assert dist_dict(state.finalize()) == pytest.approx({2: 0.4, 9: 0.6})

    def test_truncation_keeps_best_and_buckets_rest(self):
        probs = [0.3, 0.4, 0.5, 0.6]
        values = [1, 2, 3, 4]
        full = MinMaxUda("min")
        trunc = MinMaxUda("min", capacity=2)
        for p, v in zip(probs, values):
            full.accumulate(p, v)
            trunc.accumulate(p, v)
        exact = dist_dict(full.finalize())
        got = trunc.finalize()
        assert got.overflow_at == 3  # the best value evicted
        d = dist_dict(got)
        assert d[1] == pytest.approx(exact[1])
        assert d[2] == pytest.approx(exact[2])
        # the bucket swallows every world with min >= 3
        assert d[3] == pytest.approx(
            exact[3] + exact[4] + exact[POS_INF]
        )

    def test_truncated_max_buckets_smallest(self):
        trunc = MinMaxUda("max", capacity=1)
        for p, v in zip([0.5, 0.5], [10, 20]):
            trunc.accumulate(p, v)
        got = trunc.finalize()
        assert got.overflow_at == 10
        assert dist_dict(got) == pytest.approx({20: 0.5, 10: 0.5})

    def test_merge_with_disjoint_truncations(self):
        probs = [0.3, 0.4, 0.5, 0.6, 0.7, 0.8]
        values = [6, 1, 4, 2, 5, 3]
        full = MinMaxUda("min")
        for p, v in zip(probs, values):
            full.accumulate(p, v)
        exact = dist_dict(full.finalize())

        a = MinMaxUda("min", capacity=3)
        b = MinMaxUda("min", capacity=3)
        for p, v in list(zip(probs, values))[:3]:
            a.accumulate(p, v)
        for p, v in list(zip(probs, values))[3:]:
            b.accumulate(p, v)
        a.merge(b)
        # retained values carry the exact probabilities
        got = a.finalize()
        for key, mass in dist_dict(got).items():
            if got.overflow_at is not None and key == got.overflow_at:
                continue
            if math.isinf(key):
                continue
            assert mass == pytest.approx(exact[key]), key

    def test_mode_mismatch_merge_rejected(self):
        a = MinMaxUda("min")
        b = MinMaxUda("max")
        with pytest.raises(ContractError):
            a.merge(b)

    def test_empty_min_is_positive_infinity(self):
        assert MinMaxUda("min").finalize().items() == ((POS_INF, 1.0),)
        assert MinMaxUda("max").finalize().items() == ((NEG_INF, 1.0),)


class TestNormalUda:
    def test_readings_count_moments(self):
        state = NormalUda("count")
        for p in READINGS_PROBS:
            state.accumulate(p)
        approx = state.finalize()
        assert isinstance(approx, NormalApprox)
        assert approx.mu == pytest.approx(2.0)
        assert approx.sigma2 == pytest.approx(0.62)

    def test_sum_moments(self):
        state = NormalUda("sum")
        for p, v in zip(READINGS_PROBS, READINGS_VALUES):
            state.accumulate(p, v)
        approx = state.finalize()
        mu = sum(p * v for p, v in zip(READINGS_PROBS, READINGS_VALUES))
        var = sum(v * v * p * (1 - p) for p, v in zip(READINGS_PROBS, READINGS_VALUES))
        assert approx.mu == pytest.approx(mu)
        assert approx.sigma2 == pytest.approx(var)

    def test_merge_matches_single_pass(self):
        rng = np.random.default_rng(8)
        probs = rng.uniform(size=30)
        values = rng.integers(1, 9, size=30)
        whole = NormalUda("sum")
        whole.accumulate_many(probs, values)
        a, b = NormalUda("sum"), NormalUda("sum")
        a.accumulate_many(probs[:11], values[:11])
        b.accumulate_many(probs[11:], values[11:])
        a.merge(b)
        left, right = a.finalize(), whole.finalize()
        assert left.mu == pytest.approx(right.mu)
        assert left.sigma2 == pytest.approx(right.sigma2)


class TestMomentsUda:
    def test_large_count_fits_mixture(self):
        rng = np.random.default_rng(21)
        probs = rng.uniform(size=20_000)
        state = MomentsUda("count", components=4)
        state.accumulate_many(probs)
        mix = state.finalize()
        assert isinstance(mix, GammaMixture)
        assert mix.mean() == pytest.approx(float(probs.sum()), rel=1e-9)
        assert mix.variance() == pytest.approx(float((probs * (1 - probs)).sum()), rel=1e-9)

    def test_degenerate_inputs_collapse_to_point(self):
        state = MomentsUda("sum")
        state.accumulate(1.0, 5)
        state.accumulate(1.0, 7)
        out = state.finalize()
        assert out.items() == ((12, 1.0),)

    def test_fit_failure_falls_back_to_normal(self):
        # two-point distribution cannot support a 4-component fit
        state = MomentsUda("count", components=4)
        state.accumulate(0.5)
        with pytest.warns(RuntimeWarning, match="normal"):
            out = state.finalize()
        assert isinstance(out, NormalApprox)

    def test_merge_matches_single_pass(self):
        rng = np.random.default_rng(13)
        probs = rng.uniform(size=400)
        values = rng.integers(1, 15, size=400)
        whole = MomentsUda("sum", components=3)
        whole.accumulate_many(probs, values)
        a = MomentsUda("sum", components=3)
        b = MomentsUda("sum", components=3)
        a.accumulate_many(probs[:150], values[:150])
        b.accumulate_many(probs[150:], values[150:])
        a.merge(b)
        left, right = a.finalize(), whole.finalize()
        assert isinstance(left, GammaMixture) and isinstance(right, GammaMixture)
        assert left.lam == pytest.approx(right.lam, rel=1e-9)
        assert list(left.mus) == pytest.approx(list(right.mus), rel=1e-9)


@st.composite
def weighted_values(draw):
    n = draw(st.integers(min_value=0, max_value=12))
    probs = draw(
        st.lists(
            st.floats(min_value=0.0, max_value=1.0), min_size=n, max_size=n
        )
    )
    values = draw(
        st.lists(st.integers(min_value=-8, max_value=8), min_size=n, max_size=n)
    )
    split = draw(st.integers(min_value=0, max_value=n))
    return probs, values, split


@given(weighted_values())
@settings(max_examples=60, deadline=None)
def test_merge_contract_count_sum(case):
    probs, values, split = case
    whole_c, whole_s = CountUda(), SumUda()
    a_c, b_c = CountUda(), CountUda()
    a_s, b_s = SumUda(), SumUda()
    for i, (p, v) in enumerate(zip(probs, values)):
        whole_c.accumulate(p)
        whole_s.accumulate(p, v)
        (a_c if i < split else b_c).accumulate(p)
        (a_s if i < split else b_s).accumulate(p, v)
    a_c.merge(b_c)
    a_s.merge(b_s)
    assert np.abs(a_c.finalize().coeffs - whole_c.finalize().coeffs).max() < 1e-9
    merged = dict(a_s.finalize().items())
    single = dict(whole_s.finalize().items())
    assert set(merged) == set(single)
    for k, v in single.items():
        assert abs(merged[k] - v) < 1e-9


@given(weighted_values())
@settings(max_examples=60, deadline=None)
def test_merge_contract_minmax(case):
    probs, values, split = case
    for mode in ("min", "max"):
        whole = MinMaxUda(mode)
        a, b = MinMaxUda(mode), MinMaxUda(mode)
        for i, (p, v) in enumerate(zip(probs, values)):
            whole.accumulate(p, v)
            (a if i < split else b).accumulate(p, v)
        a.merge(b)
        merged = dict(a.finalize().items())
        single = dict(whole.finalize().items())
        assert set(merged) == set(single)
        for k, v in single.items():
            assert abs(merged[k] - v) < 1e-9
