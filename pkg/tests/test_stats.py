"""Exact nonparametric tests and BH-FDR against enumeration references."""

import math

import numpy as np
import pytest
import scipy.stats

from lesionbench.stats import (
    bh_fdr,
    kruskal_wallis,
    mann_whitney_u,
    significance_stars,
    wilcoxon_signed_rank,
)
from oracles import bh_reference, enumerate_mwu_p, enumerate_wilcoxon_p


def test_wilcoxon_all_positive_five():
    result = wilcoxon_signed_rank([1, 2, 3, 4, 5])
    assert result.p_value == pytest.approx(2 / 32, abs=1e-15)
    assert result.statistic == 15.0
    assert result.method == "exact"
    assert result.n_effective == 5


def test_wilcoxon_antisymmetric_pair():
    result = wilcoxon_signed_rank([-1, 1])
    assert result.p_value == 1.0


def test_wilcoxon_drops_zeros_and_reports():
    result = wilcoxon_signed_rank([0, 0, 1, 2, 3])
    assert result.zeros_dropped == 2
    assert result.n_effective == 3
    assert result.p_value == pytest.approx(2 / 8)


def test_wilcoxon_all_zero_rejected():
    with pytest.raises(ValueError, match="zero"):
        wilcoxon_signed_rank([0.0, 0.0])


def test_wilcoxon_statistic_is_positive_rank_sum():
    result = wilcoxon_signed_rank([1, 2, 3, -4])
    assert result.statistic == 6.0  # ranks 1+2+3


def test_wilcoxon_matches_enumeration_with_ties():
    rng = np.random.default_rng(31)
    for _ in range(60):
        n = int(rng.integers(1, 13))
        diffs = rng.integers(-5, 6, size=n).astype(float)
        diffs = diffs[diffs != 0]
        if diffs.size == 0:
            continue
        ours = wilcoxon_signed_rank(diffs)
        assert ours.method == "exact"
        assert abs(ours.p_value - enumerate_wilcoxon_p(diffs)) < 1e-12


def test_wilcoxon_matches_scipy_exact_on_tie_free_input():
    rng = np.random.default_rng(32)
    for _ in range(20):
        n = int(rng.integers(3, 15))
        diffs = rng.permutation(np.arange(1, n + 1)) * rng.choice([-1.0, 1.0], size=n)
        ours = wilcoxon_signed_rank(diffs)
        ref = scipy.stats.wilcoxon(diffs, alternative="two-sided", method="exact")
        assert ours.p_value == pytest.approx(ref.pvalue, abs=1e-12)


def test_wilcoxon_normal_approx_close_to_exact_at_20():
    rng = np.random.default_rng(33)
    diffs = rng.normal(size=50)
    subset = diffs[:20]
    exact = wilcoxon_signed_rank(subset)
    assert exact.method == "exact"
    approx = scipy.stats.wilcoxon(
        subset, alternative="two-sided", method="approx", correction=True
    )
    assert abs(exact.p_value - approx.pvalue) < 0.01


def test_wilcoxon_switches_to_normal_beyond_limit():
    rng = np.random.default_rng(34)
    result = wilcoxon_signed_rank(rng.normal(size=26))
    assert result.method == "normal-approx"
    assert 0.0 <= result.p_value <= 1.0


def test_mwu_small_extreme():
    result = mann_whitney_u([1, 2], [3, 4])
    assert result.statistic == 0.0
    assert result.p_value == pytest.approx(2 / 6, abs=1e-15)
    assert result.method == "exact"


def test_mwu_identical_multisets():
    result = mann_whitney_u([1, 2, 3], [1, 2, 3])
    assert result.p_value == 1.0


def test_mwu_fully_separated_ten_vs_ten():
    result = mann_whitney_u(list(range(1, 11)), list(range(11, 21)))
    assert result.statistic == 0.0
    assert result.p_value == pytest.approx(2 / math.comb(20, 10), abs=1e-18)
    assert result.method == "exact"


def test_mwu_empty_group_rejected():
    with pytest.raises(ValueError):
        mann_whitney_u([], [1.0])


def test_mwu_matches_enumeration():
    rng = np.random.default_rng(35)
    for _ in range(40):
        n1 = int(rng.integers(1, 7))
        n2 = int(rng.integers(1, 7))
        a = rng.normal(size=n1)
        b = rng.normal(size=n2)
        ours = mann_whitney_u(a, b)
        assert ours.method == "exact"
        assert abs(ours.p_value - enumerate_mwu_p(a, b)) < 1e-12


def test_mwu_matches_scipy_exact():
    rng = np.random.default_rng(36)
    for _ in range(20):
        a = rng.normal(size=int(rng.integers(2, 9)))
        b = rng.normal(size=int(rng.integers(2, 9)))
        ours = mann_whitney_u(a, b)
        ref = scipy.stats.mannwhitneyu(a, b, alternative="two-sided", method="exact")
        assert ours.p_value == pytest.approx(ref.pvalue, abs=1e-12)


def test_mwu_label_symmetry():
    rng = np.random.default_rng(37)
    for _ in range(10):
        a = rng.normal(size=5).tolist()
        b = rng.normal(size=7).tolist()
        assert mann_whitney_u(a, b).p_value == pytest.approx(
            mann_whitney_u(b, a).p_value, abs=1e-15
        )


def test_rank_tests_invariant_under_monotone_transform():
    rng = np.random.default_rng(38)
    a = rng.normal(size=6)
    b = rng.normal(size=8)
    diffs = rng.normal(size=9)
    transform = lambda x: np.exp(3 * np.asarray(x)) + 7  # noqa: E731
    assert mann_whitney_u(a, b).p_value == pytest.approx(
        mann_whitney_u(transform(a), transform(b)).p_value, abs=1e-15
    )
    # Signed-rank needs a sign- and order-preserving map of the diffs.
    odd = lambda x: np.sign(x) * (np.abs(x) ** 3 + np.abs(x))  # noqa: E731
    assert wilcoxon_signed_rank(diffs).p_value == pytest.approx(
        wilcoxon_signed_rank(odd(diffs)).p_value, abs=1e-15
    )


def test_mwu_ties_fall_back_to_normal():
    result = mann_whitney_u([1, 1, 2], [2, 3, 3])
    assert result.method == "normal-approx"
    ref = scipy.stats.mannwhitneyu(
        [1, 1, 2], [2, 3, 3], alternative="two-sided", method="asymptotic"
    )
    assert result.p_value == pytest.approx(ref.pvalue, abs=1e-10)


def test_mwu_large_sample_uses_normal():
    rng = np.random.default_rng(39)
    result = mann_whitney_u(rng.normal(size=11), rng.normal(size=10))
    assert result.method == "normal-approx"


def test_kruskal_identical_groups():
    result = kruskal_wallis([[1, 2], [1, 2], [1, 2]])
    assert result.statistic == pytest.approx(0.0, abs=1e-12)
    assert result.p_value == 1.0


def test_kruskal_three_disjoint_groups():
    result = kruskal_wallis([[1, 2, 3], [4, 5, 6], [7, 8, 9]])
    assert result.statistic == pytest.approx(7.2, abs=1e-12)
    assert result.p_value == pytest.approx(math.exp(-3.6), abs=1e-12)


def test_kruskal_matches_scipy():
    rng = np.random.default_rng(40)
    for _ in range(10):
        groups = [rng.normal(size=int(rng.integers(3, 9))) for _ in range(3)]
        ours = kruskal_wallis(groups)
        ref = scipy.stats.kruskal(*groups)
        assert ours.statistic == pytest.approx(ref.statistic, abs=1e-10)
        assert ours.p_value == pytest.approx(ref.pvalue, abs=1e-10)


def test_kruskal_two_groups_tracks_mwu_approx():
    rng = np.random.default_rng(41)
    a = rng.normal(size=20)
    b = rng.normal(loc=0.4, size=20)
    kw = kruskal_wallis([a, b])
    mwu = mann_whitney_u(a, b)
    assert mwu.method == "normal-approx"
    assert abs(kw.p_value - mwu.p_value) < 0.02


def test_kruskal_needs_two_groups():
    with pytest.raises(ValueError):
        kruskal_wallis([[1, 2, 3]])


def test_bh_rejects_all_when_uniformly_small():
    result = bh_fdr([0.01, 0.02, 0.03, 0.04], q=0.05)
    assert all(result.rejected)
    assert result.adjusted_p == pytest.approx((0.04, 0.04, 0.04, 0.04))


def test_bh_single_value():
    result = bh_fdr([0.5], q=0.05)
    assert result.rejected == (False,)
    assert result.adjusted_p == (0.5,)


def test_bh_mixed_pair():
    result = bh_fdr([0.001, 0.9], q=0.05)
    assert result.rejected == (True, False)
    assert result.adjusted_p == pytest.approx((0.002, 0.9))


def test_bh_results_in_input_order():
    shuffled = [0.9, 0.001]
    result = bh_fdr(shuffled, q=0.05)
    assert result.rejected == (False, True)
    assert result.adjusted_p == pytest.approx((0.9, 0.002))


def test_bh_matches_literal_stepup_reference():
    rng = np.random.default_rng(42)
    for _ in range(50):
        m = int(rng.integers(1, 12))
        ps = rng.random(m).tolist()
        result = bh_fdr(ps, q=0.05)
        adj_ref, rej_ref = bh_reference(ps, 0.05)
        assert list(result.adjusted_p) == adj_ref
        assert list(result.rejected) == rej_ref


def test_bh_adjusted_p_dominates_raw_and_is_monotone():
    rng = np.random.default_rng(43)
    ps = rng.random(20)
    result = bh_fdr(ps.tolist(), q=0.05)
    adjusted = np.asarray(result.adjusted_p)
    assert np.all(adjusted >= ps - 1e-15)
    order = np.argsort(ps, kind="stable")
    assert np.all(np.diff(adjusted[order]) >= -1e-15)
    # Rejections form a prefix of the sorted p-values.
    rejected_sorted = np.asarray(result.rejected)[order]
    if rejected_sorted.any():
        last = np.nonzero(rejected_sorted)[0][-1]
        assert rejected_sorted[: last + 1].all()


def test_bh_input_validation():
    with pytest.raises(ValueError):
        bh_fdr([], q=0.05)
    with pytest.raises(ValueError):
        bh_fdr([0.5, 1.2], q=0.05)
    with pytest.raises(ValueError):
        bh_fdr([0.5], q=0.0)


def test_significance_stars_strict_boundaries():
    assert significance_stars(0.05) == ""
    assert significance_stars(0.049) == "*"
    assert significance_stars(0.01) == "*"
    assert significance_stars(0.009) == "**"
    assert significance_stars(0.001) == "**"
    assert significance_stars(0.0009) == "***"
