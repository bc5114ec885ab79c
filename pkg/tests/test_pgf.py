import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pgfdb import (
    DenseCountPgf,
    EmptySupportError,
    InternalError,
    NormalizationError,
    Pgf,
    ValueScale,
    confidence_interval,
    pgf_mul_minmax,
    poly_mul,
    prob_compare,
    product_tree,
    total_variation,
    truncate_and_renormalize,
)
from pgfdb.pgf import (
    _clamp_roundoff,
    _mul_arrays,
    _mul_stacked,
    _product_tree_arrays,
    _product_tree_stacked,
)

POS_INF = math.inf
NEG_INF = -math.inf


class TestValueScale:
    def test_integer_grid_is_identity(self):
        scale = ValueScale(0)
        assert scale.to_grid(7) == 7
        assert scale.from_grid(7) == 7

    def test_decimal_grid_scales_exactly(self):
        scale = ValueScale(2)
        assert scale.to_grid(1.25) == 125
        assert scale.from_grid(125) == 1.25

    def test_off_grid_value_rejected(self):
        with pytest.raises(ValueError, match="grid"):
            ValueScale(1).to_grid(0.15)

    def test_negative_values_supported(self):
        assert ValueScale(1).to_grid(-2.5) == -25

    def test_negative_digits_rejected(self):
        with pytest.raises(ValueError):
            ValueScale(-1)


class TestPgfBasics:
    def test_terms_sorted_and_merged(self):
        d = Pgf([(5, 0.25), (1, 0.5), (5, 0.25)])
        assert d.items() == ((1, 0.5), (5, 0.5))

    def test_zero_mass_terms_dropped(self):
        d = Pgf([(1, 1.0), (2, 0.0)])
        assert d.support() == (1,)

    def test_normalization_enforced(self):
        with pytest.raises(NormalizationError):
            Pgf([(1, 0.5), (2, 0.3)])

    def test_from_weights_normalizes(self):
        d = Pgf.from_weights({1: 2.0, 2: 6.0})
        assert d.mass_at_key(1) == pytest.approx(0.25)
        assert d.mass_at_key(2) == pytest.approx(0.75)

    def test_from_weights_empty_rejected(self):
        with pytest.raises(EmptySupportError):
            Pgf.from_weights({})

    def test_point_mass(self):
        d = Pgf.point(4)
        assert d.items() == ((4, 1.0),)
        assert d.mean() == 4.0
        assert d.variance() == 0.0

    def test_infinite_keys_allowed(self):
        d = Pgf([(3, 0.7), (POS_INF, 0.3)])
        assert d.support() == (3, POS_INF)
        assert d.mean() is None
        assert d.variance() is None

    def test_cdf_and_strict_cdf(self):
        d = Pgf([(1, 0.2), (3, 0.5), (6, 0.3)])
        assert d.cdf_key(3) == pytest.approx(0.7)
        assert d.cdf_strict_key(3) == pytest.approx(0.2)
        assert d.cdf(4.5) == pytest.approx(0.7)
        assert d.mass_at(3) == pytest.approx(0.5)
        assert d.mass_at(4) == 0.0

    def test_display_items_respect_scale(self):
        d = Pgf([(25, 0.5), (50, 0.5)], scale_digits=1)
        assert d.display_items() == ((2.5, 0.5), (5.0, 0.5))

    def test_rescale_to_finer_grid(self):
        d = Pgf([(3, 0.4), (5, 0.6)])
        fine = d.rescaled(2)
        assert fine.items() == ((300, 0.4), (500, 0.6))
        assert fine.display_items() == d.display_items()

    def test_rescale_coarser_rejected(self):
        d = Pgf([(25, 1.0)], scale_digits=1)
        with pytest.raises(ValueError):
            d.rescaled(0)

    def test_mean_variance(self):
        d = Pgf([(0, 0.5), (10, 0.5)])
        assert d.mean() == pytest.approx(5.0)
        assert d.variance() == pytest.approx(25.0)

    def test_total_variation(self):
        a = Pgf([(0, 0.5), (1, 0.5)])
        b = Pgf([(0, 0.25), (1, 0.75)])
        assert total_variation(a, b) == pytest.approx(0.25)

    def test_total_variation_aligns_scales(self):
        a = Pgf([(1, 1.0)])  # value 1 on the unit grid
        b = Pgf([(10, 1.0)], scale_digits=1)  # the same value, finer grid
        assert total_variation(a, b) == pytest.approx(0.0)


@st.composite
def weight_maps(draw):
    n = draw(st.integers(min_value=1, max_value=6))
    keys = draw(
        st.lists(
            st.integers(min_value=-30, max_value=30),
            min_size=n,
            max_size=n,
            unique=True,
        )
    )
    weights = draw(
        st.lists(
            st.floats(min_value=0.01, max_value=10.0),
            min_size=n,
            max_size=n,
        )
    )
    return dict(zip(keys, weights))


@given(weight_maps())
def test_from_weights_total_mass_one(weights):
    d = Pgf.from_weights(weights)
    assert abs(sum(p for _, p in d.items()) - 1.0) < 1e-9


class TestDenseCountPgf:
    def test_validates_total_mass(self):
        with pytest.raises(NormalizationError):
            DenseCountPgf([0.5, 0.2])

    def test_negative_coefficient_rejected(self):
        with pytest.raises(NormalizationError):
            DenseCountPgf([1.5, -0.5])

    def test_to_pgf_drops_zeros(self):
        d = DenseCountPgf([0.5, 0.0, 0.5])
        assert d.to_pgf().items() == ((0, 0.5), (2, 0.5))

    def test_to_pgf_shift_produces_negative_keys(self):
        d = DenseCountPgf([0.5, 0.5])
        assert d.to_pgf(shift=3).support() == (-3, -2)

    def test_cdf(self):
        d = DenseCountPgf([0.2, 0.3, 0.5])
        assert d.cdf(1) == pytest.approx(0.5)
        assert d.mass_at(2) == pytest.approx(0.5)
        assert d.mass_at(7) == 0.0


class TestMultiplication:
    def test_small_product_matches_convolution(self):
        a = np.array([0.3, 0.7])
        b = np.array([0.5, 0.2, 0.3])
        out = poly_mul(DenseCountPgf(a), DenseCountPgf(b))
        assert np.allclose(out.coeffs, np.convolve(a, b), atol=1e-15)

    def test_fft_and_schoolbook_agree(self):
        rng = np.random.default_rng(3)
        a = rng.uniform(size=700)
        a /= a.sum()
        b = rng.uniform(size=600)
        b /= b.sum()
        school = _mul_arrays(a, b, threshold=10**9)
        fft = _mul_arrays(a, b, threshold=1)
        assert np.abs(school - fft).max() < 1e-12

    def test_clamp_accepts_tiny_negatives(self):
        arr = np.array([1.0, -1e-14])
        out = _clamp_roundoff(arr.copy())
        assert out[1] == 0.0

    def test_clamp_rejects_real_negatives(self):
        with pytest.raises(InternalError):
            _clamp_roundoff(np.array([1.0, -1e-9]))

    def test_product_tree_single_factor(self):
        d = product_tree([DenseCountPgf([0.4, 0.6])])
        assert np.allclose(d.coeffs, [0.4, 0.6])

    def test_product_tree_empty_rejected(self):
        with pytest.raises(ValueError):
            product_tree([])

    def test_product_tree_matches_sequential_fold(self):
        rng = np.random.default_rng(11)
        factors = []
        for _ in range(13):
            c = rng.uniform(size=rng.integers(1, 5))
            factors.append(c / c.sum())
        seq = factors[0]
        for f in factors[1:]:
            seq = np.convolve(seq, f)
        tree = _product_tree_arrays(factors, threshold=5000)
        assert np.abs(tree - seq).max() < 1e-12

    @given(st.permutations(list(range(9))))
    @settings(max_examples=25, deadline=None)
    def test_product_order_invariance(self, order):
        probs = [0.1, 0.25, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.35]
        base = [np.array([1 - p, p]) for p in probs]
        ref = _product_tree_arrays(base, threshold=5000)
        shuffled = [base[i] for i in order]
        out = _product_tree_arrays(shuffled, threshold=5000)
        assert np.abs(out - ref).max() < 1e-12

    def test_stacked_rounds_match_pairwise(self):
        rng = np.random.default_rng(5)
        for n in (2, 3, 8, 9, 17, 64):
            stack = rng.uniform(0.05, 1.0, size=(n, 2))
            stack /= stack.sum(axis=1, keepdims=True)
            via_stack = _product_tree_stacked(stack, threshold=5000)
            via_list = _product_tree_arrays(list(stack), threshold=5000)
            assert np.abs(via_stack - via_list).max() < 1e-12, n

    def test_mul_stacked_matches_rowwise(self):
        rng = np.random.default_rng(9)
        A = rng.uniform(size=(6, 4))
        A /= A.sum(axis=1, keepdims=True)
        B = rng.uniform(size=(6, 3))
        B /= B.sum(axis=1, keepdims=True)
        for threshold in (1, 10**9):
            out = _mul_stacked(A, B, threshold=threshold)
            for i in range(6):
                assert np.abs(out[i] - np.convolve(A[i], B[i])).max() < 1e-12


class TestMinMaxProduct:
    def test_pairwise_min(self):
        a = Pgf([(3, 0.7), (POS_INF, 0.3)])
        b = Pgf([(8, 0.8), (POS_INF, 0.2)])
        out = pgf_mul_minmax(a, b, "min")
        assert dict(out.items()) == pytest.approx({3: 0.7, 8: 0.24, POS_INF: 0.06})

    def test_pairwise_max(self):
        a = Pgf([(3, 0.7), (NEG_INF, 0.3)])
        b = Pgf([(8, 0.8), (NEG_INF, 0.2)])
        out = pgf_mul_minmax(a, b, "max")
        assert dict(out.items()) == pytest.approx({8: 0.8, 3: 0.14, NEG_INF: 0.06})

    def test_min_aligns_scales(self):
        a = Pgf([(30, 1.0)], scale_digits=1)
        b = Pgf([(4, 1.0)])
        out = pgf_mul_minmax(a, b, "min")
        assert out.display_items() == ((3.0, 1.0),)


class TestProbCompare:
    def test_scalar_comparisons(self):
        d = Pgf([(1, 0.2), (3, 0.5), (6, 0.3)])
        assert prob_compare(d, 3, "=") == pytest.approx(0.5)
        assert prob_compare(d, 3, "<") == pytest.approx(0.2)
        assert prob_compare(d, 3, "<=") == pytest.approx(0.7)
        assert prob_compare(d, 3, ">") == pytest.approx(0.3)
        assert prob_compare(d, 3, ">=") == pytest.approx(0.8)

    def test_scalar_off_grid(self):
        d = Pgf([(1, 0.2), (3, 0.8)])
        assert prob_compare(d, 2.5, "=") == 0.0
        assert prob_compare(d, 2.5, "<") == pytest.approx(0.2)
        assert prob_compare(d, 2.5, ">=") == pytest.approx(0.8)

    def test_count_at_least_two(self):
        d = Pgf([(0, 0.03), (1, 0.22), (2, 0.47), (3, 0.28)])
        assert prob_compare(d, 2, ">=") == pytest.approx(0.75)

    def test_pair_of_distributions(self):
        a = Pgf([(1, 0.5), (4, 0.5)])
        b = Pgf([(2, 0.5), (4, 0.5)])
        # independent pairs: (1,2) (1,4) (4,2) (4,4), each 0.25
        assert prob_compare(a, b, "<") == pytest.approx(0.5)
        assert prob_compare(a, b, "=") == pytest.approx(0.25)
        assert prob_compare(a, b, ">") == pytest.approx(0.25)

    def test_infinite_terms_compare(self):
        a = Pgf([(3, 0.7), (POS_INF, 0.3)])
        assert prob_compare(a, 10, ">") == pytest.approx(0.3)
        assert prob_compare(a, 10, "<=") == pytest.approx(0.7)


@st.composite
def small_pgfs(draw):
    n = draw(st.integers(min_value=1, max_value=5))
    keys = draw(
        st.lists(
            st.integers(min_value=-10, max_value=10), min_size=n, max_size=n,
            unique=True,
        )
    )
    weights = draw(
        st.lists(st.floats(min_value=0.05, max_value=1.0), min_size=n, max_size=n)
    )
    return Pgf.from_weights(dict(zip(keys, weights)))


@given(small_pgfs(), small_pgfs())
@settings(max_examples=100)
def test_compare_trichotomy(a, b):
    total = (
        prob_compare(a, b, "<")
        + prob_compare(a, b, "=")
        + prob_compare(a, b, ">")
    )
    assert abs(total - 1.0) < 1e-9


class TestTruncate:
    def test_truncate_renormalizes(self):
        d = Pgf([(5, 0.2), (7, 0.3), (9, 0.5)])
        kept, mass = truncate_and_renormalize(d, lambda v: v > 6)
        assert mass == pytest.approx(0.8)
        assert dict(kept.items()) == pytest.approx({7: 0.375, 9: 0.625})

    def test_truncate_everything_rejected(self):
        d = Pgf([(5, 1.0)])
        with pytest.raises(EmptySupportError):
            truncate_and_renormalize(d, lambda v: v > 100)


class TestConfidenceInterval:
    def test_uniform_four_values(self):
        d = Pgf([(0, 0.25), (1, 0.25), (2, 0.25), (3, 0.25)])
        assert confidence_interval(d, 0.95) == (0, 3)

    def test_half_level_two_points(self):
        d = Pgf([(1, 0.5), (3, 0.5)])
        assert confidence_interval(d, 0.5) == (1, 3)

    def test_point_mass(self):
        d = Pgf.point(9)
        assert confidence_interval(d, 0.95) == (9, 9)

    def test_display_units(self):
        d = Pgf([(10, 0.5), (30, 0.5)], scale_digits=1)
        assert confidence_interval(d, 0.5) == (1.0, 3.0)

    def test_interval_contains_requested_mass(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            n = rng.integers(2, 12)
            keys = rng.choice(np.arange(-20, 21), size=n, replace=False)
            w = rng.uniform(0.05, 1.0, size=n)
            d = Pgf.from_weights(dict(zip((int(k) for k in keys), w)))
            lo, hi = confidence_interval(d, 0.95)
            mass = sum(p for k, p in d.items() if lo <= k <= hi)
            assert mass >= 0.95 - 1e-12
