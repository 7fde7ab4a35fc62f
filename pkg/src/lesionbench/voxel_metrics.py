"""Voxel-level overlap metrics: confusion counts, DSC and normalized DSC."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .volume_io import MaskVolume, validate_pair

EPS_R = 1e-9


@dataclass(frozen=True)
class ConfusionCounts:
    """Voxelwise confusion counts of a prediction against ground truth."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def gt_positive(self) -> int:
        return self.tp + self.fn

    @property
    def gt_negative(self) -> int:
        return self.fp + self.tn


def confusion_counts(gt: MaskVolume, pred: MaskVolume) -> ConfusionCounts:
    """Count tp/fp/fn/tn voxels for a validated pair."""
    validate_pair(gt, pred)
    g = gt.voxels != 0
    p = pred.voxels != 0
    tp = int(np.count_nonzero(g & p))
    fp = int(np.count_nonzero(~g & p))
    fn = int(np.count_nonzero(g & ~p))
    tn = g.size - tp - fp - fn
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def dsc(counts: ConfusionCounts) -> float:
    """Dice similarity coefficient 2TP / (2TP + FP + FN).

    Both masks empty means nothing to segment and nothing segmented,
    scored as perfect agreement (1.0).
    """
    denom = 2 * counts.tp + counts.fp + counts.fn
    if denom == 0:
        return 1.0
    return 2 * counts.tp / denom


def reference_fraction(gt_fractions) -> float:
    """Mean positive-class fraction of a ground-truth set, the r of nDSC.

    Clamped into (1e-9, 1 - 1e-9) so kappa = h(1/r - 1) stays finite.
    """
    fractions = np.asarray(list(gt_fractions), dtype=np.float64)
    if fractions.size == 0:
        raise ValueError("reference_fraction needs at least one value")
    if np.any((fractions < 0) | (fractions > 1)):
        raise ValueError("positive-class fractions must lie in [0, 1]")
    r = float(fractions.mean())
    if r <= EPS_R or r >= 1 - EPS_R:
        warnings.warn(
            f"reference fraction {r} clamped into ({EPS_R}, {1 - EPS_R})",
            stacklevel=2,
        )
        r = min(max(r, EPS_R), 1 - EPS_R)
    return r


def ndsc(counts: ConfusionCounts, r: float) -> float:
    """Normalized DSC 2TP / (2TP + kappa*FP + FN), kappa = h(1/r - 1).

    h is the positive/negative class ratio of the ground truth.  An empty
    ground truth gives h = 0, collapsing the formula; by convention the
    score is then 1.0 for an empty prediction and 0.0 otherwise, matching
    dsc on the same degenerate inputs.
    """
    if not 0.0 < r < 1.0:
        raise ValueError(f"r must lie in (0, 1), got {r}")
    if counts.gt_positive == 0:
        return 1.0 if counts.fp == 0 else 0.0
    if counts.gt_negative == 0:
        # All-positive ground truth leaves no room for false positives.
        return 2 * counts.tp / (2 * counts.tp + counts.fn)
    h = counts.gt_positive / counts.gt_negative
    kappa = h * (1.0 / r - 1.0)
    return 2 * counts.tp / (2 * counts.tp + kappa * counts.fp + counts.fn)
