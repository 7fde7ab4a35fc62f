"""Nonparametric tests and false-discovery-rate control.

Exact two-sided p-values are computed by counting over the full null
distribution when the sample is small enough (sign patterns for the
signed-rank test, rank subsets for the U test); larger samples fall back
to tie-corrected normal approximations with a 0.5 continuity correction.
All p-values are two-sided: p = min(1, 2 * min(P(<= obs), P(>= obs))).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaincc
from scipy.stats import rankdata

WILCOXON_EXACT_LIMIT = 25
MWU_EXACT_LIMIT = 20


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str  # "exact" or "normal-approx"
    n_effective: int
    zeros_dropped: int = 0


@dataclass(frozen=True)
class FdrResult:
    adjusted_p: tuple[float, ...]
    rejected: tuple[bool, ...]
    q: float


def _two_sided_normal(z: float) -> float:
    return math.erfc(abs(z) / math.sqrt(2.0))


def _tie_term(values: np.ndarray) -> float:
    """Sum of t^3 - t over tie groups of the pooled values."""
    _, counts = np.unique(values, return_counts=True)
    return float(np.sum(counts.astype(np.float64) ** 3 - counts))


def _doubled_rank_counts(doubled: np.ndarray) -> np.ndarray:
    """Subset-sum counts over doubled ranks (integers, ties included)."""
    total = int(doubled.sum())
    dp = np.zeros(total + 1, dtype=np.float64)
    dp[0] = 1.0
    for s in doubled.tolist():
        dp[s:] = dp[s:] + dp[:-s]
    return dp


def wilcoxon_signed_rank(paired_diffs: Sequence[float]) -> TestResult:
    """Two-sided Wilcoxon signed-rank test on paired differences.

    Zero differences are dropped (classic convention) and their count
    reported.  W is the positive-rank sum.  Exact enumeration up to
    n = 25 nonzero differences, normal approximation beyond.
    """
    diffs = np.asarray(list(paired_diffs), dtype=np.float64)
    zeros = int(np.count_nonzero(diffs == 0))
    diffs = diffs[diffs != 0]
    n = diffs.size
    if n == 0:
        raise ValueError("all differences are zero")
    ranks = rankdata(np.abs(diffs))
    w = float(ranks[diffs > 0].sum())

    if n <= WILCOXON_EXACT_LIMIT:
        # Average ranks are multiples of 1/2, so doubled ranks are exact ints.
        doubled = np.round(2 * ranks).astype(np.int64)
        dp = _doubled_rank_counts(doubled)
        w2 = int(round(2 * w))
        n_le = float(dp[: w2 + 1].sum())
        n_ge = float(dp[w2:].sum())
        p = min(1.0, 2.0 * min(n_le, n_ge) / 2.0**n)
        return TestResult(w, p, "exact", n, zeros)

    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - _tie_term(np.abs(diffs)) / 48.0
    if var <= 0:
        return TestResult(w, 1.0, "normal-approx", n, zeros)
    z = max(0.0, abs(w - mean) - 0.5) / math.sqrt(var)
    return TestResult(w, min(1.0, _two_sided_normal(z)), "normal-approx", n, zeros)


def _mwu_exact_p(n1: int, n2: int, u: float) -> float:
    """Exact U distribution via counting rank subsets (no ties allowed)."""
    # dp[k][s]: number of ways to pick k of the ranks seen so far with
    # rank-sum shift s, where shift = U value contribution.  U of sample a
    # equals R1 - n1(n1+1)/2 and ranges over 0..n1*n2.
    max_u = n1 * n2
    dp = np.zeros((n1 + 1, max_u + 1), dtype=np.float64)
    dp[0, 0] = 1.0
    for rank in range(1, n1 + n2 + 1):
        for k in range(min(rank, n1), 0, -1):
            shift = rank - k  # rank contributes (rank - position) to U
            row = dp[k - 1, : max_u + 1 - shift] if shift else dp[k - 1]
            dp[k, shift:] += row
    dist = dp[n1]
    total = dist.sum()
    ui = int(round(u))
    p = 2.0 * min(dist[: ui + 1].sum(), dist[ui:].sum()) / total
    return min(1.0, float(p))


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Two-sided Mann-Whitney U test.

    Exact when the pooled sample has at most 20 values and no ties;
    otherwise tie-corrected normal approximation.
    """
    x = np.asarray(list(a), dtype=np.float64)
    y = np.asarray(list(b), dtype=np.float64)
    if x.size == 0 or y.size == 0:
        raise ValueError("both samples must be non-empty")
    n1, n2 = x.size, y.size
    pooled = np.concatenate([x, y])
    ranks = rankdata(pooled)
    r1 = float(ranks[:n1].sum())
    u = r1 - n1 * (n1 + 1) / 2.0
    n = n1 + n2

    has_ties = np.unique(pooled).size < n
    if n <= MWU_EXACT_LIMIT and not has_ties:
        return TestResult(u, _mwu_exact_p(n1, n2, u), "exact", n)

    mean = n1 * n2 / 2.0
    var = n1 * n2 / 12.0 * ((n + 1) - _tie_term(pooled) / (n * (n - 1)))
    if var <= 0:
        return TestResult(u, 1.0, "normal-approx", n)
    z = max(0.0, abs(u - mean) - 0.5) / math.sqrt(var)
    return TestResult(u, min(1.0, _two_sided_normal(z)), "normal-approx", n)


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> TestResult:
    """Kruskal-Wallis H test with tie correction, chi-squared upper tail."""
    samples = [np.asarray(list(g), dtype=np.float64) for g in groups]
    if len(samples) < 2 or any(s.size == 0 for s in samples):
        raise ValueError("need at least 2 non-empty groups")
    pooled = np.concatenate(samples)
    n = pooled.size
    ranks = rankdata(pooled)
    h = 0.0
    start = 0
    for s in samples:
        r = ranks[start : start + s.size]
        h += r.sum() ** 2 / s.size
        start += s.size
    h = 12.0 / (n * (n + 1)) * h - 3 * (n + 1)
    correction = 1.0 - _tie_term(pooled) / (n**3 - n)
    if correction <= 0:
        return TestResult(0.0, 1.0, "normal-approx", n)
    h /= correction
    df = len(samples) - 1
    p = float(gammaincc(df / 2.0, max(h, 0.0) / 2.0))
    return TestResult(h, min(1.0, p), "normal-approx", n)


def bh_fdr(p_values: Sequence[float], q: float = 0.05) -> FdrResult:
    """Benjamini-Hochberg step-up control at error rate q.

    Rejects the k smallest p-values where k = max{i : p(i) <= i*q/m};
    adjusted p(i) = min over j >= i of min(1, m*p(j)/j), returned in the
    input order.
    """
    p = np.asarray(list(p_values), dtype=np.float64)
    if p.size == 0:
        raise ValueError("no p-values given")
    if np.any((p < 0) | (p > 1)) or np.any(~np.isfinite(p)):
        raise ValueError("p-values must lie in [0, 1]")
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    m = p.size
    order = np.argsort(p, kind="stable")
    ranks = np.arange(1, m + 1, dtype=np.float64)

    scaled = np.minimum(1.0, m * p[order] / ranks)
    adjusted_sorted = np.minimum.accumulate(scaled[::-1])[::-1]

    passing = np.nonzero(p[order] <= ranks * q / m)[0]
    k = passing[-1] + 1 if passing.size else 0
    rejected_sorted = np.zeros(m, dtype=bool)
    rejected_sorted[:k] = True

    adjusted = np.empty(m)
    adjusted[order] = adjusted_sorted
    rejected = np.zeros(m, dtype=bool)
    rejected[order] = rejected_sorted
    return FdrResult(
        adjusted_p=tuple(float(v) for v in adjusted),
        rejected=tuple(bool(v) for v in rejected),
        q=q,
    )


def significance_stars(p: float) -> str:
    """Star annotation: * p<0.05, ** p<0.01, *** p<0.001."""
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""
