"""Attribute detection errors to lesion phenotypes or tissue classes.

Each TPL/FPL/FNL component is assigned the atlas class it overlaps most;
ties go to the class listed earlier in the atlas priority order, and
components touching no class land in an "unclassified" bucket.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lesion_metrics import LesionMatchResult
from .volume_io import GeometryMismatchError, MaskVolume, load_mask

UNCLASSIFIED = "unclassified"
CATEGORIES = ("TPL", "FPL", "FNL")


@dataclass(frozen=True)
class PhenotypeAtlas:
    """Named class masks on the evaluation grid plus a priority order."""

    masks: dict[str, MaskVolume]
    priority: tuple[str, ...]

    def __post_init__(self) -> None:
        if sorted(self.priority) != sorted(self.masks):
            raise ValueError("priority order must list every atlas class exactly once")
        dims = {m.header.dims for m in self.masks.values()}
        if len(dims) > 1:
            raise GeometryMismatchError(f"atlas masks disagree on dims: {sorted(dims)}")

    @property
    def dims(self) -> tuple[int, int, int]:
        first = next(iter(self.masks.values()))
        return first.header.dims


def load_atlas(manifest_path: str | Path, threshold: float = 0.5) -> PhenotypeAtlas:
    """Read an atlas manifest CSV with columns class,path,priority_rank."""
    manifest_path = Path(manifest_path)
    required = {"class", "path", "priority_rank"}
    entries: list[tuple[int, str, str]] = []
    with open(manifest_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            missing = sorted(required - set(reader.fieldnames or []))
            raise ValueError(f"atlas manifest: missing columns {missing}")
        for i, row in enumerate(reader, start=2):
            try:
                rank = int(row["priority_rank"])
            except ValueError as exc:
                raise ValueError(
                    f"atlas manifest row {i}: priority_rank must be an integer"
                ) from exc
            entries.append((rank, row["class"], row["path"]))
    if not entries:
        raise ValueError("atlas manifest: no entries")
    names = [name for _, name, _ in entries]
    if len(set(names)) != len(names):
        raise ValueError("atlas manifest: duplicate class names")
    entries.sort(key=lambda e: (e[0], e[1]))
    masks = {}
    for _, name, path in entries:
        mask_path = Path(path)
        if not mask_path.is_absolute():
            mask_path = manifest_path.parent / mask_path
        masks[name] = load_mask(mask_path, threshold=threshold)
    return PhenotypeAtlas(masks=masks, priority=tuple(name for _, name, _ in entries))


def classify_component(component: np.ndarray, atlas: PhenotypeAtlas) -> str:
    """Assign one component (boolean grid) to its majority-overlap class."""
    if not component.any():
        raise ValueError("component is empty")
    if tuple(component.shape) != atlas.dims:
        raise GeometryMismatchError(
            f"dims: component {tuple(component.shape)} vs atlas {atlas.dims}"
        )
    best_class = UNCLASSIFIED
    best_count = 0
    for name in atlas.priority:
        count = int(np.count_nonzero(component & (atlas.masks[name].voxels != 0)))
        if count > best_count:
            best_class = name
            best_count = count
    return best_class


def _classify_labels(
    labels: np.ndarray, n_labels: int, atlas: PhenotypeAtlas
) -> dict[int, str]:
    """Majority class per label id, computed with one pass per atlas class."""
    if tuple(labels.shape) != atlas.dims:
        raise GeometryMismatchError(
            f"dims: labels {tuple(labels.shape)} vs atlas {atlas.dims}"
        )
    best = {i: (0, UNCLASSIFIED) for i in range(1, n_labels + 1)}
    for name in atlas.priority:
        inside = labels[atlas.masks[name].voxels != 0]
        counts = np.bincount(inside[inside > 0], minlength=n_labels + 1)
        for i in range(1, n_labels + 1):
            if counts[i] > best[i][0]:
                best[i] = (int(counts[i]), name)
    return {i: name for i, (_, name) in best.items()}


@dataclass(frozen=True)
class TypedErrorRow:
    """Count and volumes of one (error category, phenotype) cell."""

    category: str
    phenotype: str
    count: int
    percent: int  # of the category total, rounded half-up
    volumes_mm3: tuple[float, ...]


@dataclass(frozen=True)
class TypedErrorTable:
    rows: tuple[TypedErrorRow, ...]
    category_totals: dict[str, int]


def percent_of(count: int, total: int) -> int:
    return int(math.floor(count / total * 100 + 0.5)) if total else 0


def typed_error_table(match: LesionMatchResult, atlas: PhenotypeAtlas) -> TypedErrorTable:
    """Classify every TPL/FPL/FNL component and tabulate counts per class."""
    pred_classes = _classify_labels(
        match.pred_label_map.labels, match.pred_label_map.component_count, atlas
    )
    gt_classes = _classify_labels(
        match.gt_label_map.labels, match.gt_label_map.component_count, atlas
    )

    members = {
        "TPL": [(ov.pred_label, pred_classes, match.pred_volumes_mm3) for ov in match.tpl],
        "FPL": [(label, pred_classes, match.pred_volumes_mm3) for label in match.fpl],
        "FNL": [(label, gt_classes, match.gt_volumes_mm3) for label in match.fnl],
    }
    rows = []
    totals = {}
    class_order = list(atlas.priority) + [UNCLASSIFIED]
    for category in CATEGORIES:
        total = len(members[category])
        totals[category] = total
        volumes: dict[str, list[float]] = {name: [] for name in class_order}
        for label, classes, vol_map in members[category]:
            volumes[classes[label]].append(vol_map[label])
        for name in class_order:
            if volumes[name]:
                rows.append(
                    TypedErrorRow(
                        category=category,
                        phenotype=name,
                        count=len(volumes[name]),
                        percent=percent_of(len(volumes[name]), total),
                        volumes_mm3=tuple(volumes[name]),
                    )
                )
    return TypedErrorTable(rows=tuple(rows), category_totals=totals)


@dataclass(frozen=True)
class VolumeSummaryRow:
    """Quartile summary of component volumes in one table cell."""

    category: str
    phenotype: str
    count: int
    median_mm3: float
    q1_mm3: float
    q3_mm3: float
    median_ml: float
    q1_ml: float
    q3_ml: float


def volume_summary(table: TypedErrorTable) -> list[VolumeSummaryRow]:
    """Median and quartiles (linear interpolation) per non-empty cell."""
    out = []
    for row in table.rows:
        q1, med, q3 = np.quantile(row.volumes_mm3, [0.25, 0.5, 0.75])
        out.append(
            VolumeSummaryRow(
                category=row.category,
                phenotype=row.phenotype,
                count=row.count,
                median_mm3=float(med),
                q1_mm3=float(q1),
                q3_mm3=float(q3),
                median_ml=float(med) / 1000.0,
                q1_ml=float(q1) / 1000.0,
                q3_ml=float(q3) / 1000.0,
            )
        )
    return out


def log_volume_histogram(
    volumes_mm3, bins_per_decade: int = 4
) -> tuple[list[float], list[int]]:
    """Bin volumes into log10-spaced edges covering their decade range."""
    values = np.asarray(list(volumes_mm3), dtype=np.float64)
    if values.size == 0:
        return [], []
    if np.any(values <= 0):
        raise ValueError("volumes must be positive for log binning")
    lo = math.floor(math.log10(values.min()))
    hi = math.ceil(math.log10(values.max()))
    if hi == lo:
        hi += 1
    n_bins = (hi - lo) * bins_per_decade
    edges = np.logspace(lo, hi, n_bins + 1)
    # Guard the extremes against float rounding at the decade boundaries.
    edges[0] = min(edges[0], values.min())
    edges[-1] = max(edges[-1], values.max())
    counts, _ = np.histogram(values, bins=edges)
    return [float(e) for e in edges], [int(c) for c in counts]
