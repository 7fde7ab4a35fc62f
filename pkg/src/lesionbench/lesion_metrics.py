"""Lesion-level detection scoring on labelled component maps.

A predicted component counts as detected (TPL) if it shares at least one
voxel with the ground truth; otherwise it is a false positive (FPL).  A
ground-truth component nothing overlaps is a missed lesion (FNL).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .labeling import LabelMap
from .volume_io import GeometryMismatchError

# Normal quantile for a two-sided 90% interval, pinned for reproducibility.
Z90 = 1.6449


@dataclass(frozen=True)
class LesionOverlap:
    """One detected prediction component and the gt components it touches."""

    pred_label: int
    gt_labels: tuple[int, ...]
    overlap_voxels: tuple[int, ...]


@dataclass(frozen=True)
class LesionMatchResult:
    """Partition of components into detected, spurious and missed lesions."""

    tpl: tuple[LesionOverlap, ...]
    fpl: tuple[int, ...]
    fnl: tuple[int, ...]
    pred_volumes_mm3: dict[int, float]
    gt_volumes_mm3: dict[int, float]
    gt_label_map: LabelMap = field(compare=False, repr=False)
    pred_label_map: LabelMap = field(compare=False, repr=False)

    @property
    def tpl_count(self) -> int:
        return len(self.tpl)

    @property
    def fpl_count(self) -> int:
        return len(self.fpl)

    @property
    def fnl_count(self) -> int:
        return len(self.fnl)


@dataclass(frozen=True)
class DetectionMetrics:
    """Scan-level detection scores; None marks an undefined value."""

    f1: float | None
    precision: float | None
    recall: float | None
    tpl_count: int
    fpl_count: int
    fnl_count: int


def match_lesions(gt_labels: LabelMap, pred_labels: LabelMap) -> LesionMatchResult:
    """Classify components of a prediction/ground-truth pair."""
    if gt_labels.header.dims != pred_labels.header.dims:
        raise GeometryMismatchError(
            f"dims: gt {gt_labels.header.dims} vs pred {pred_labels.header.dims}"
        )
    g = gt_labels.labels
    p = pred_labels.labels
    both = (g > 0) & (p > 0)
    n_gt = gt_labels.component_count

    overlapped_gt: set[int] = set()
    by_pred: dict[int, dict[int, int]] = {}
    if both.any():
        # Encode (pred, gt) label pairs into one int64 key for counting.
        key = p[both].astype(np.int64) * (n_gt + 1) + g[both].astype(np.int64)
        pairs, counts = np.unique(key, return_counts=True)
        for pair, count in zip(pairs.tolist(), counts.tolist()):
            pl, gl = divmod(pair, n_gt + 1)
            by_pred.setdefault(pl, {})[gl] = count
            overlapped_gt.add(gl)

    tpl = tuple(
        LesionOverlap(
            pred_label=pl,
            gt_labels=tuple(sorted(by_pred[pl])),
            overlap_voxels=tuple(by_pred[pl][gl] for gl in sorted(by_pred[pl])),
        )
        for pl in sorted(by_pred)
    )
    fpl = tuple(
        label
        for label in range(1, pred_labels.component_count + 1)
        if label not in by_pred
    )
    fnl = tuple(label for label in range(1, n_gt + 1) if label not in overlapped_gt)

    vox_mm3 = gt_labels.header.voxel_volume_mm3
    return LesionMatchResult(
        tpl=tpl,
        fpl=fpl,
        fnl=fnl,
        pred_volumes_mm3={i: n * vox_mm3 for i, n in pred_labels.component_sizes.items()},
        gt_volumes_mm3={i: n * vox_mm3 for i, n in gt_labels.component_sizes.items()},
        gt_label_map=gt_labels,
        pred_label_map=pred_labels,
    )


def detection_metrics(match: LesionMatchResult, gt_empty: bool) -> DetectionMetrics:
    """Compute F1/Precision/Recall with the lesion-free-scan conventions.

    Scans without any ground-truth lesion have no recall; their precision
    and F1 are 1.0 when the prediction is also clean, else 0.0.  A scan
    with lesions but an empty prediction scores precision 0 rather than
    undefined so F1 stays defined.
    """
    tpl, fpl, fnl = match.tpl_count, match.fpl_count, match.fnl_count
    if gt_empty:
        score = 1.0 if fpl == 0 else 0.0
        return DetectionMetrics(
            f1=score,
            precision=score,
            recall=None,
            tpl_count=tpl,
            fpl_count=fpl,
            fnl_count=fnl,
        )
    precision = tpl / (tpl + fpl) if tpl + fpl > 0 else 0.0
    recall = tpl / (tpl + fnl)
    f1 = 2 * tpl / (2 * tpl + fpl + fnl)
    return DetectionMetrics(
        f1=f1,
        precision=precision,
        recall=recall,
        tpl_count=tpl,
        fpl_count=fpl,
        fnl_count=fnl,
    )


@dataclass(frozen=True)
class AggregateRow:
    """Mean / standard error / 90% CI of one metric across scans."""

    metric: str
    n: int
    excluded: int
    mean: float | None
    se: float | None
    ci90_low: float | None
    ci90_high: float | None
    degenerate_n: bool


def aggregate_values(values: Sequence[float | None], metric: str) -> AggregateRow:
    """Summarize one metric; None entries are excluded but counted."""
    defined = [v for v in values if v is not None]
    excluded = len(values) - len(defined)
    n = len(defined)
    if n == 0:
        return AggregateRow(metric, 0, excluded, None, None, None, None, False)
    arr = np.asarray(defined, dtype=np.float64)
    mean = float(arr.mean())
    if n == 1:
        se = 0.0
        degenerate = True
    else:
        se = float(arr.std(ddof=1) / math.sqrt(n))
        degenerate = False
    return AggregateRow(
        metric=metric,
        n=n,
        excluded=excluded,
        mean=mean,
        se=se,
        ci90_low=mean - Z90 * se,
        ci90_high=mean + Z90 * se,
        degenerate_n=degenerate,
    )


def aggregate(
    per_scan: Sequence[Mapping[str, float | None]],
    metrics: Sequence[str] | None = None,
) -> list[AggregateRow]:
    """Aggregate per-scan metric mappings into one row per metric."""
    if not per_scan:
        raise ValueError("aggregate needs at least one scan")
    if metrics is None:
        seen: dict[str, None] = {}
        for row in per_scan:
            for key in row:
                seen.setdefault(key)
        metrics = list(seen)
    return [
        aggregate_values([row.get(m) for row in per_scan], m) for m in metrics
    ]
