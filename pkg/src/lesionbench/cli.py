"""Command-line interface: evaluate, split, compare, explain, report.

Exit codes: 0 clean, 2 partial per-scan failures, 1 fatal.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset_split import read_split_manifest, stratified_group_split
from .error_analysis import log_volume_histogram
from .feature_space import (
    pca_fit,
    pca_project,
    pearson,
    quantile_transform,
    read_feature_file,
    reduce_tensor,
)
from .pipeline import read_pairs_manifest, run_evaluation
from .report import write_csv, write_json
from .stats import bh_fdr, mann_whitney_u, significance_stars, wilcoxon_signed_rank
from .svg import HistogramSeries, RadarSeries, log_histogram, radar_chart

RADAR_AXES = (("nDSC", "ndsc"), ("DSC", "dsc"), ("F1", "f1"), ("Recall", "recall"), ("Precision", "precision"))

PER_SCAN_COLUMNS = (
    "scan_id",
    "site",
    "modality",
    "field_strength",
    "disease",
    "status",
    "tp",
    "fp",
    "fn",
    "tn",
    "dsc",
    "ndsc",
    "n_gt_lesions",
    "n_pred_lesions",
    "tpl",
    "fpl",
    "fnl",
    "precision",
    "recall",
    "f1",
    "gt_volume_ml",
    "pred_volume_ml",
    "warnings",
    "error",
)

AGGREGATE_COLUMNS = (
    "grouping",
    "group",
    "metric",
    "n",
    "excluded",
    "mean",
    "se",
    "ci90_low",
    "ci90_high",
    "degenerate_n",
)


def _add_shared(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=0, help="PRNG seed (u64)")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lesionbench",
        description="Voxel- and lesion-level evaluation of 3D segmentation masks",
    )
    parser.add_argument("--version", action="version", version=f"lesionbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("evaluate", help="score gt/pred mask pairs from a manifest")
    p_eval.add_argument("manifest", help="pairs manifest CSV")
    p_eval.add_argument(
        "--connectivity", type=int, choices=(6, 18, 26), default=26,
        help="neighborhood for connected components",
    )
    p_eval.add_argument(
        "--ndsc-r", default="auto",
        help="reference fraction for nDSC: a float or 'auto' (cohort mean)",
    )
    p_eval.add_argument("--threshold", type=float, default=0.5, help="binarization threshold")
    _add_shared(p_eval)

    p_split = sub.add_parser("split", help="stratified subject-grouped train/test split")
    p_split.add_argument("manifest", help="split manifest CSV")
    p_split.add_argument("--ratio", type=float, default=0.8, help="train fraction")
    _add_shared(p_split)

    p_cmp = sub.add_parser("compare", help="test metric differences between models")
    p_cmp.add_argument("baseline", help="per_scan.csv of the baseline model")
    p_cmp.add_argument("contenders", nargs="+", help="per_scan.csv files to compare")
    p_cmp.add_argument("--labels", default="", help="comma-separated model names")
    p_cmp.add_argument(
        "--metrics", default="ndsc,dsc,f1,recall,precision",
        help="comma-separated metric columns",
    )
    p_cmp.add_argument(
        "--test", choices=("wilcoxon", "mannwhitney"), default="wilcoxon",
        help="paired signed-rank (default) or unpaired U test",
    )
    p_cmp.add_argument("--q", type=float, default=0.05, help="FDR error rate")
    p_cmp.add_argument(
        "--fdr-family", choices=("global", "per-metric"), default="global",
        help="which p-values are corrected together",
    )
    _add_shared(p_cmp)

    p_exp = sub.add_parser("explain", help="feature-space PCA embedding and correlations")
    p_exp.add_argument("--features", required=True, help="directory of .bin/.json tensors")
    p_exp.add_argument("--meta", required=True, help="scan metadata CSV with a split column")
    p_exp.add_argument("--components", type=int, default=3)
    p_exp.add_argument(
        "--covariates", default="",
        help="comma-separated numeric columns to correlate (default: auto-detect)",
    )
    p_exp.add_argument(
        "--quantile-cols", default="",
        help="covariates to quantile-transform before correlating",
    )
    _add_shared(p_exp)

    p_rep = sub.add_parser("report", help="render radar and histogram SVGs")
    p_rep.add_argument("reports", nargs="+", help="report.json files from evaluate")
    p_rep.add_argument("--labels", default="", help="comma-separated series names")
    _add_shared(p_rep)
    return parser


def cmd_evaluate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = read_pairs_manifest(args.manifest)
    if args.ndsc_r == "auto":
        r_value = None
    else:
        r_value = float(args.ndsc_r)
        if not 0.0 < r_value < 1.0:
            raise ValueError(f"--ndsc-r must lie in (0, 1), got {r_value}")
    report = run_evaluation(
        records,
        connectivity=args.connectivity,
        threshold=args.threshold,
        r_value=r_value,
        jobs=args.jobs,
    )
    write_json(out / "report.json", report)

    rows = []
    for scan in report["per_scan"]:
        row = dict(scan)
        row["warnings"] = ";".join(row.get("warnings", []))
        row["error"] = None
        rows.append([row.get(c) for c in PER_SCAN_COLUMNS])
    failed_ids = {f["scan_id"] for f in report["failures"]}
    by_id = {rec.scan_id: rec for rec in records}
    for failure in report["failures"]:
        rec = by_id[failure["scan_id"]]
        row = {c: None for c in PER_SCAN_COLUMNS}
        row.update(
            scan_id=rec.scan_id,
            site=rec.site,
            modality=rec.modality,
            field_strength=rec.field_strength,
            disease=rec.disease,
            status="failed",
            error=failure["error"],
        )
        rows.append([row[c] for c in PER_SCAN_COLUMNS])
    rows.sort(key=lambda r: r[0])
    write_csv(out / "per_scan.csv", PER_SCAN_COLUMNS, rows)

    write_csv(
        out / "aggregates.csv",
        AGGREGATE_COLUMNS,
        [[a[c] for c in AGGREGATE_COLUMNS] for a in report["aggregates"]],
    )
    if "typed_errors" in report:
        write_csv(
            out / "typed_errors.csv",
            ("category", "phenotype", "count", "percent"),
            [
                [t["category"], t["phenotype"], t["count"], t["percent"]]
                for t in report["typed_errors"]
            ],
        )
        summary_cols = (
            "category",
            "phenotype",
            "count",
            "median_mm3",
            "q1_mm3",
            "q3_mm3",
            "median_ml",
            "q1_ml",
            "q3_ml",
        )
        write_csv(
            out / "volume_summaries.csv",
            summary_cols,
            [[s[c] for c in summary_cols] for s in report["volume_summaries"]],
        )
    n_failed = report["metadata"]["n_failed"]
    print(
        f"evaluated {report['metadata']['n_ok']}/{report['metadata']['n_scans']} pairs"
        + (f" ({n_failed} failed)" if n_failed else "")
    )
    return 2 if failed_ids else 0


def cmd_split(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = read_split_manifest(args.manifest)
    result = stratified_group_split(records, ratio=args.ratio, seed=args.seed)
    write_json(out / "split.json", result.to_dict())
    print(
        f"train {len(result.train)} scans / test {len(result.test)} scans "
        f"({result.report.achieved_train_fraction:.4f} train fraction)"
    )
    return 0


def _read_metric_table(path: str) -> dict[str, dict[str, float]]:
    """scan_id -> metric -> value for ok rows of a per_scan.csv."""
    table: dict[str, dict[str, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "scan_id" not in reader.fieldnames:
            raise ValueError(f"{path}: not a per-scan metrics CSV")
        for row in reader:
            if row.get("status", "ok") != "ok":
                continue
            metrics = {}
            for key, raw in row.items():
                if key in ("scan_id", "status"):
                    continue
                try:
                    metrics[key] = float(raw)
                except (TypeError, ValueError):
                    continue
            table[row["scan_id"]] = metrics
    if not table:
        raise ValueError(f"{path}: no usable rows")
    return table


def cmd_compare(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    paths = [args.baseline] + list(args.contenders)
    if args.labels:
        labels = [s.strip() for s in args.labels.split(",")]
        if len(labels) != len(paths):
            raise ValueError(
                f"--labels needs {len(paths)} names (baseline + contenders), got {len(labels)}"
            )
    else:
        labels = []
        for p in paths:
            stem = Path(p).parent.name or Path(p).stem
            label = stem
            i = 2
            while label in labels:
                label = f"{stem}_{i}"
                i += 1
            labels.append(label)
    tables = [_read_metric_table(p) for p in paths]
    baseline_label, contender_labels = labels[0], labels[1:]

    comparisons = []  # (metric, contender, result dict)
    for metric in metrics:
        for label, table in zip(contender_labels, tables[1:]):
            if args.test == "wilcoxon":
                shared = sorted(
                    s
                    for s in tables[0]
                    if s in table and metric in tables[0][s] and metric in table[s]
                )
                if not shared:
                    raise ValueError(f"no shared scans with metric {metric} for {label}")
                diffs = [table[s][metric] - tables[0][s][metric] for s in shared]
                if all(d == 0 for d in diffs):
                    result = {
                        "statistic": 0.0,
                        "p": 1.0,
                        "method": "exact",
                        "n": 0,
                        "zeros": len(diffs),
                    }
                else:
                    res = wilcoxon_signed_rank(diffs)
                    result = {
                        "statistic": res.statistic,
                        "p": res.p_value,
                        "method": res.method,
                        "n": res.n_effective,
                        "zeros": res.zeros_dropped,
                    }
            else:
                a = [v[metric] for v in tables[0].values() if metric in v]
                b = [v[metric] for v in table.values() if metric in v]
                res = mann_whitney_u(a, b)
                result = {
                    "statistic": res.statistic,
                    "p": res.p_value,
                    "method": res.method,
                    "n": res.n_effective,
                    "zeros": 0,
                }
            comparisons.append((metric, label, result))

    adjusted = [0.0] * len(comparisons)
    if args.fdr_family == "global":
        fdr = bh_fdr([c[2]["p"] for c in comparisons], q=args.q)
        adjusted = list(fdr.adjusted_p)
    else:
        for metric in metrics:
            idx = [i for i, c in enumerate(comparisons) if c[0] == metric]
            fdr = bh_fdr([comparisons[i][2]["p"] for i in idx], q=args.q)
            for i, adj in zip(idx, fdr.adjusted_p):
                adjusted[i] = adj

    rows = []
    for (metric, label, result), adj in zip(comparisons, adjusted):
        rows.append(
            [
                metric,
                baseline_label,
                label,
                result["n"],
                result["zeros"],
                result["statistic"],
                result["method"],
                result["p"],
                adj,
                significance_stars(adj),
            ]
        )
    write_csv(
        out / "comparison.csv",
        (
            "metric",
            "baseline",
            "contender",
            "n_effective",
            "zeros_dropped",
            "statistic",
            "method",
            "raw_p",
            "adjusted_p",
            "stars",
        ),
        rows,
    )
    write_json(
        out / "comparison_meta.json",
        {
            "test": args.test,
            "q": args.q,
            "fdr_family": args.fdr_family,
            "sidedness": "two-sided",
            "baseline": baseline_label,
            "contenders": contender_labels,
            "metrics": metrics,
        },
    )
    print(f"compared {len(contender_labels)} model(s) on {len(metrics)} metric(s)")
    return 0


def cmd_explain(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    features_dir = Path(args.features)
    with open(args.meta, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"scan_id", "split"}
        if not required.issubset(reader.fieldnames or []):
            raise ValueError("meta CSV: need scan_id and split columns")
        meta_rows = list(reader)
    if not meta_rows:
        raise ValueError("meta CSV: no rows")
    for i, row in enumerate(meta_rows, start=2):
        if row["split"] not in ("train", "test"):
            raise ValueError(f"meta CSV row {i}: split must be train or test")

    vectors = {}
    for i, row in enumerate(meta_rows, start=2):
        sidecar = features_dir / f"{row['scan_id']}.json"
        if not sidecar.exists():
            raise FileNotFoundError(f"meta CSV row {i}: no feature file {sidecar.name}")
        vectors[row["scan_id"]] = reduce_tensor(read_feature_file(sidecar))

    lengths = {v.values.size for v in vectors.values()}
    if len(lengths) > 1:
        raise ValueError(f"feature vectors disagree on length: {sorted(lengths)}")
    train_ids = [r["scan_id"] for r in meta_rows if r["split"] == "train"]
    matrix = np.stack([vectors[s].values for s in train_ids])
    model = pca_fit(matrix, n_components=args.components)
    total_variance = float(
        np.sum((matrix - matrix.mean(axis=0)) ** 2) / (len(train_ids) - 1)
    )

    all_ids = [r["scan_id"] for r in meta_rows]
    embedding = pca_project(model, np.stack([vectors[s].values for s in all_ids]))
    pc_cols = [f"pc{i + 1}" for i in range(args.components)]
    emb_rows = []
    for row, coords in zip(meta_rows, embedding):
        emb_rows.append(
            [row["scan_id"]]
            + [float(c) for c in coords]
            + [row["split"], row.get("site", ""), row.get("modality", ""), row.get("field_strength", "")]
        )
    write_csv(
        out / "embedding.csv",
        ["scan_id"] + pc_cols + ["split", "site", "modality", "field_strength"],
        emb_rows,
    )

    reserved = {"scan_id", "split", "site", "modality", "field_strength"}
    if args.covariates:
        covariates = [c.strip() for c in args.covariates.split(",") if c.strip()]
    else:
        covariates = [
            c
            for c in (meta_rows[0].keys())
            if c not in reserved and _all_numeric(meta_rows, c)
        ]
    quantile_cols = {c.strip() for c in args.quantile_cols.split(",") if c.strip()}
    missing_q = quantile_cols - set(covariates)
    if missing_q:
        raise ValueError(f"--quantile-cols not among covariates: {sorted(missing_q)}")

    corr_rows = []
    notes = []
    for cov in covariates:
        defined = [
            (i, float(row[cov]))
            for i, row in enumerate(meta_rows)
            if row.get(cov) not in (None, "")
        ]
        if len(defined) < 2:
            notes.append(f"covariate {cov}: fewer than 2 defined values, skipped")
            continue
        idx = [i for i, _ in defined]
        values = np.array([v for _, v in defined])
        if cov in quantile_cols:
            values = quantile_transform(values)
        for k, pc in enumerate(pc_cols):
            try:
                r = pearson(embedding[idx, k], values)
            except ValueError:
                notes.append(f"covariate {cov}: constant input, no correlation")
                break
            corr_rows.append([pc, cov, r, len(idx)])
    write_csv(out / "correlations.csv", ("component", "covariate", "r", "n"), corr_rows)

    write_json(
        out / "explain.json",
        {
            "n_components": args.components,
            "n_train": len(train_ids),
            "n_total": len(all_ids),
            "feature_length": int(next(iter(lengths))),
            "explained_variance": [float(v) for v in model.explained_variance],
            "explained_variance_ratio": [
                float(v) / total_variance for v in model.explained_variance
            ],
            "scaling": "centered, unscaled features",
            "quantile_transformed": sorted(quantile_cols),
            "notes": notes,
        },
    )
    print(f"embedded {len(all_ids)} scans ({len(train_ids)} train) into {args.components} components")
    return 0


def _all_numeric(rows: list[dict], column: str) -> bool:
    seen = False
    for row in rows:
        raw = row.get(column)
        if raw in (None, ""):
            continue
        try:
            float(raw)
        except ValueError:
            return False
        seen = True
    return seen


def cmd_report(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for path in args.reports:
        with open(path, encoding="utf-8") as fh:
            reports.append(json.load(fh))
    if args.labels:
        labels = [s.strip() for s in args.labels.split(",")]
        if len(labels) != len(reports):
            raise ValueError(f"--labels needs {len(reports)} names, got {len(labels)}")
    else:
        labels = []
        for p in args.reports:
            stem = Path(p).parent.name or Path(p).stem
            label = stem
            i = 2
            while label in labels:
                label = f"{stem}_{i}"
                i += 1
            labels.append(label)

    series = []
    for label, report in zip(labels, reports):
        overall = {
            row["metric"]: row
            for row in report.get("aggregates", [])
            if row.get("grouping") == "all"
        }
        values, lows, highs = [], [], []
        for axis_label, key in RADAR_AXES:
            row = overall.get(key)
            if row is None or row.get("mean") is None:
                raise ValueError(
                    f"report {label}: metric {key} missing or undefined; cannot draw radar"
                )
            values.append(row["mean"])
            lows.append(row["ci90_low"])
            highs.append(row["ci90_high"])
        series.append(
            RadarSeries(
                label=label,
                values=tuple(values),
                low=tuple(lows),
                high=tuple(highs),
            )
        )
    radar = radar_chart(
        [a for a, _ in RADAR_AXES], series, title="Detection and overlap quality"
    )
    (out / "radar.svg").write_text(radar, encoding="utf-8")

    written = ["radar.svg"]
    for category in ("TPL", "FPL", "FNL"):
        pooled = []
        per_report = []
        for report in reports:
            volumes = report.get("error_volumes_mm3", {}).get(category, [])
            per_report.append(volumes)
            pooled.extend(volumes)
        if not pooled:
            continue
        edges, _ = log_volume_histogram(pooled)
        hist_series = []
        for label, volumes in zip(labels, per_report):
            counts, _ = np.histogram(volumes, bins=edges) if volumes else (
                np.zeros(len(edges) - 1, dtype=int),
                None,
            )
            hist_series.append(
                HistogramSeries(label=label, counts=tuple(int(c) for c in counts))
            )
        svg = log_histogram(
            edges,
            hist_series,
            title=f"{category} volume distribution",
        )
        name = f"hist_{category.lower()}.svg"
        (out / name).write_text(svg, encoding="utf-8")
        written.append(name)
    print("wrote " + ", ".join(written))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # usage errors are fatal; reserve exit 2 for partial scan failures
        return 0 if exc.code == 0 else 1
    handlers = {
        "evaluate": cmd_evaluate,
        "split": cmd_split,
        "compare": cmd_compare,
        "explain": cmd_explain,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
