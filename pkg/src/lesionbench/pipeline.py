"""End-to-end per-scan evaluation driving all metric modules.

Workers evaluate independent scan pairs (optionally in a process pool);
results are re-sorted canonically before any output is written, so the
worker count never changes report bytes.  nDSC is computed after the
fan-out because its reference fraction defaults to the cohort mean.
"""

from __future__ import annotations

import csv
import functools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .error_analysis import CATEGORIES, load_atlas, percent_of, typed_error_table
from .labeling import label_components
from .lesion_metrics import aggregate, detection_metrics, match_lesions
from .voxel_metrics import ConfusionCounts, confusion_counts, dsc, ndsc, reference_fraction
from .volume_io import load_mask, validate_pair, voxel_volume_ml

METRIC_ORDER = ("ndsc", "dsc", "f1", "recall", "precision", "tpl", "fpl", "fnl")

PAIR_COLUMNS = (
    "scan_id",
    "gt_path",
    "pred_path",
    "site",
    "modality",
    "field_strength",
    "disease",
)


@dataclass(frozen=True)
class PairRecord:
    """One evaluation manifest row."""

    scan_id: str
    gt_path: str
    pred_path: str
    site: str
    modality: str
    field_strength: str
    disease: str
    atlas_manifest: str = ""


def read_pairs_manifest(path: str | Path) -> list[PairRecord]:
    """Load the pairs manifest CSV, reporting violations with row numbers."""
    path = Path(path)
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in PAIR_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"pairs manifest: missing columns {missing}")
        for i, row in enumerate(reader, start=2):
            if not row["scan_id"]:
                raise ValueError(f"pairs manifest row {i}: empty scan_id")
            records.append(
                PairRecord(
                    scan_id=row["scan_id"],
                    gt_path=_resolve(path, row["gt_path"]),
                    pred_path=_resolve(path, row["pred_path"]),
                    site=row["site"],
                    modality=row["modality"],
                    field_strength=row["field_strength"],
                    disease=row["disease"],
                    atlas_manifest=_resolve(path, row.get("atlas_manifest", "")),
                )
            )
    if not records:
        raise ValueError("pairs manifest: no data rows")
    ids = [r.scan_id for r in records]
    if len(set(ids)) != len(ids):
        dupes = sorted({s for s in ids if ids.count(s) > 1})
        raise ValueError(f"pairs manifest: duplicate scan_id {dupes}")
    return records


def _resolve(manifest_path: Path, value: str) -> str:
    if not value:
        return ""
    p = Path(value)
    return str(p if p.is_absolute() else manifest_path.parent / p)


@functools.lru_cache(maxsize=4)
def _cached_atlas(manifest_path: str, threshold: float):
    return load_atlas(manifest_path, threshold=threshold)


def evaluate_pair(record: PairRecord, connectivity: int, threshold: float) -> dict:
    """Evaluate one scan pair; returns a picklable plain dict."""
    try:
        gt = load_mask(record.gt_path, threshold=threshold)
        pred = load_mask(record.pred_path, threshold=threshold)
        counts = confusion_counts(gt, pred)
        warnings = validate_pair(gt, pred)
        gt_labels = label_components(gt, connectivity)
        pred_labels = label_components(pred, connectivity)
        match = match_lesions(gt_labels, pred_labels)
        detection = detection_metrics(match, gt_empty=counts.gt_positive == 0)
        vox_ml = voxel_volume_ml(gt.header)
        tpl_vols = sorted(match.pred_volumes_mm3[ov.pred_label] for ov in match.tpl)
        fpl_vols = sorted(match.pred_volumes_mm3[i] for i in match.fpl)
        fnl_vols = sorted(match.gt_volumes_mm3[i] for i in match.fnl)
        typed = None
        if record.atlas_manifest:
            atlas = _cached_atlas(record.atlas_manifest, threshold)
            table = typed_error_table(match, atlas)
            typed = [
                (r.category, r.phenotype, r.count, list(r.volumes_mm3))
                for r in table.rows
            ]
        return {
            "scan_id": record.scan_id,
            "status": "ok",
            "error": None,
            "warnings": warnings,
            "tp": counts.tp,
            "fp": counts.fp,
            "fn": counts.fn,
            "tn": counts.tn,
            "gt_fraction": counts.gt_positive / counts.total,
            "n_gt_lesions": gt_labels.component_count,
            "n_pred_lesions": pred_labels.component_count,
            "tpl": detection.tpl_count,
            "fpl": detection.fpl_count,
            "fnl": detection.fnl_count,
            "precision": detection.precision,
            "recall": detection.recall,
            "f1": detection.f1,
            "gt_volume_ml": counts.gt_positive * vox_ml,
            "pred_volume_ml": (counts.tp + counts.fp) * vox_ml,
            "tpl_volumes_mm3": tpl_vols,
            "fpl_volumes_mm3": fpl_vols,
            "fnl_volumes_mm3": fnl_vols,
            "typed": typed,
        }
    except Exception as exc:  # noqa: BLE001 - per-scan isolation by contract
        return {
            "scan_id": record.scan_id,
            "status": "failed",
            "error": f"{type(exc).__name__}: {exc}",
        }


def _worker(args) -> dict:
    record, connectivity, threshold = args
    return evaluate_pair(record, connectivity, threshold)


GROUPINGS = (
    ("all",),
    ("site",),
    ("disease",),
    ("site", "modality", "field_strength", "disease"),
)


def run_evaluation(
    records: list[PairRecord],
    connectivity: int = 26,
    threshold: float = 0.5,
    r_value: float | None = None,
    jobs: int = 1,
) -> dict:
    """Evaluate all pairs and assemble the full report structure."""
    tasks = [(rec, connectivity, threshold) for rec in records]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_worker, tasks))
    else:
        results = [_worker(t) for t in tasks]
    results.sort(key=lambda r: r["scan_id"])
    by_id = {rec.scan_id: rec for rec in records}

    ok = [r for r in results if r["status"] == "ok"]
    failed = [r for r in results if r["status"] == "failed"]
    if not ok:
        raise RuntimeError(
            "all pairs failed: " + "; ".join(f"{r['scan_id']}: {r['error']}" for r in failed)
        )

    if r_value is None:
        r = reference_fraction([row["gt_fraction"] for row in ok])
        r_mode = "auto"
    else:
        r = r_value
        r_mode = "fixed"

    per_scan = []
    for row in ok:
        counts = ConfusionCounts(tp=row["tp"], fp=row["fp"], fn=row["fn"], tn=row["tn"])
        rec = by_id[row["scan_id"]]
        per_scan.append(
            {
                "scan_id": row["scan_id"],
                "site": rec.site,
                "modality": rec.modality,
                "field_strength": rec.field_strength,
                "disease": rec.disease,
                "status": "ok",
                "tp": row["tp"],
                "fp": row["fp"],
                "fn": row["fn"],
                "tn": row["tn"],
                "dsc": dsc(counts),
                "ndsc": ndsc(counts, r),
                "n_gt_lesions": row["n_gt_lesions"],
                "n_pred_lesions": row["n_pred_lesions"],
                "tpl": row["tpl"],
                "fpl": row["fpl"],
                "fnl": row["fnl"],
                "precision": row["precision"],
                "recall": row["recall"],
                "f1": row["f1"],
                "gt_volume_ml": row["gt_volume_ml"],
                "pred_volume_ml": row["pred_volume_ml"],
                "warnings": row["warnings"],
            }
        )

    aggregates = _aggregate_rows(per_scan)
    error_volumes = {
        "TPL": sorted(v for row in ok for v in row["tpl_volumes_mm3"]),
        "FPL": sorted(v for row in ok for v in row["fpl_volumes_mm3"]),
        "FNL": sorted(v for row in ok for v in row["fnl_volumes_mm3"]),
    }
    typed_rows = _combine_typed([row["typed"] for row in ok if row["typed"]])

    report = {
        "metadata": {
            "tool": "lesionbench",
            "version": __version__,
            "connectivity": connectivity,
            "threshold": threshold,
            "r": r,
            "r_mode": r_mode,
            "ci": "mean +/- 1.6449 * SE (normal 90% interval)",
            "conventions": {
                "dsc_both_empty": "1.0",
                "ndsc_gt_empty": "1.0 if prediction empty else 0.0",
                "gt_empty_recall": "undefined, excluded from aggregation",
                "gt_empty_precision_f1": "1.0 if fpl == 0 else 0.0",
                "empty_prediction_precision": "0.0",
                "aggregation": "per-scan mean, SE = sample std / sqrt(n)",
            },
            "n_scans": len(records),
            "n_ok": len(ok),
            "n_failed": len(failed),
        },
        "per_scan": per_scan,
        "aggregates": aggregates,
        "error_volumes_mm3": error_volumes,
        "failures": [
            {"scan_id": r["scan_id"], "error": r["error"]} for r in failed
        ],
    }
    if typed_rows:
        report["typed_errors"] = typed_rows
        report["volume_summaries"] = _typed_summaries(typed_rows)
    return report


def _aggregate_rows(per_scan: list[dict]) -> list[dict]:
    rows = []
    for grouping in GROUPINGS:
        if grouping == ("all",):
            name = "all"
            buckets = {("all",): per_scan}
        else:
            name = "x".join(grouping)
            buckets = {}
            for scan in per_scan:
                buckets.setdefault(tuple(scan[k] for k in grouping), []).append(scan)
        for values in sorted(buckets):
            for agg in aggregate(buckets[values], metrics=METRIC_ORDER):
                rows.append(
                    {
                        "grouping": name,
                        "group": "|".join(str(v) for v in values),
                        "metric": agg.metric,
                        "n": agg.n,
                        "excluded": agg.excluded,
                        "mean": agg.mean,
                        "se": agg.se,
                        "ci90_low": agg.ci90_low,
                        "ci90_high": agg.ci90_high,
                        "degenerate_n": agg.degenerate_n,
                    }
                )
    return rows


def _combine_typed(per_scan_tables: list) -> list[dict]:
    """Sum typed error rows across scans; recompute percentages."""
    combined: dict[tuple[str, str], dict] = {}
    order: list[tuple[str, str]] = []
    for table in per_scan_tables:
        for category, phenotype, count, volumes in table:
            key = (category, phenotype)
            if key not in combined:
                combined[key] = {"count": 0, "volumes": []}
                order.append(key)
            combined[key]["count"] += count
            combined[key]["volumes"].extend(volumes)
    totals = {c: 0 for c in CATEGORIES}
    for (category, _), cell in combined.items():
        totals[category] += cell["count"]
    rows = []
    for category in CATEGORIES:
        for key in order:
            if key[0] != category:
                continue
            cell = combined[key]
            percent = percent_of(cell["count"], totals[category])
            rows.append(
                {
                    "category": category,
                    "phenotype": key[1],
                    "count": cell["count"],
                    "percent": percent,
                    "volumes_mm3": sorted(cell["volumes"]),
                }
            )
    return rows


def _typed_summaries(typed_rows: list[dict]) -> list[dict]:
    rows = []
    for row in typed_rows:
        q1, med, q3 = np.quantile(row["volumes_mm3"], [0.25, 0.5, 0.75])
        rows.append(
            {
                "category": row["category"],
                "phenotype": row["phenotype"],
                "count": row["count"],
                "median_mm3": float(med),
                "q1_mm3": float(q1),
                "q3_mm3": float(q3),
                "median_ml": float(med) / 1000.0,
                "q1_ml": float(q1) / 1000.0,
                "q3_ml": float(q3) / 1000.0,
            }
        )
    return rows
