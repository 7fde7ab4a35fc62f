"""Stratified, subject-grouped train/test splitting.

Scans are grouped by (subject_id, site) so no subject ever spans both
partitions.  Groups are stratified by site and by quantile bins of their
lesion count and total lesion volume; singleton strata are merged into
the nearest same-site stratum.  Shuffling uses one PCG64 stream per
stratum, derived from the run seed and a hash of the stratum id, which
makes the split a pure function of (records, ratio, seed).
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

QUANTILE_BIN_COUNT = 5
PRNG_CONTRACT = "PCG64(SeedSequence([seed, blake2b64(stratum_id)]))"

GroupKey = tuple[str, str]  # (subject_id, site)
StratumKey = tuple[str, int, int]  # (site, count_bin, volume_bin)


class SplitIntegrityError(ValueError):
    """A (subject_id, site) group spans both partitions."""


@dataclass(frozen=True)
class ScanRecord:
    """One manifest row; scans sharing (subject_id, site) form a group."""

    subject_id: str
    site: str
    modality: str
    field_strength: str
    timepoint: int
    lesion_count: int
    total_lesion_volume_ml: float
    path: str = ""

    def to_dict(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "site": self.site,
            "modality": self.modality,
            "field_strength": self.field_strength,
            "timepoint": self.timepoint,
            "lesion_count": self.lesion_count,
            "total_lesion_volume_ml": self.total_lesion_volume_ml,
            "path": self.path,
        }


MANIFEST_COLUMNS = (
    "subject_id",
    "site",
    "modality",
    "field_strength",
    "timepoint",
    "lesion_count",
    "total_lesion_volume_ml",
    "path",
)


def read_split_manifest(path: str | Path) -> list[ScanRecord]:
    """Load a split manifest CSV, reporting violations with row numbers."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in MANIFEST_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"split manifest: missing columns {missing}")
        for i, row in enumerate(reader, start=2):
            try:
                records.append(
                    ScanRecord(
                        subject_id=row["subject_id"],
                        site=row["site"],
                        modality=row["modality"],
                        field_strength=row["field_strength"],
                        timepoint=int(row["timepoint"]),
                        lesion_count=int(row["lesion_count"]),
                        total_lesion_volume_ml=float(row["total_lesion_volume_ml"]),
                        path=row["path"],
                    )
                )
            except ValueError as exc:
                raise ValueError(f"split manifest row {i}: {exc}") from exc
            if records[-1].lesion_count < 0 or records[-1].total_lesion_volume_ml < 0:
                raise ValueError(f"split manifest row {i}: negative lesion statistic")
    if not records:
        raise ValueError("split manifest: no data rows")
    return records


@dataclass(frozen=True)
class QuantileBins:
    """Bin assignment of values against empirical quantile edges."""

    indices: tuple[int, ...]
    edges: tuple[float, ...]
    requested: int
    effective: int


def quantile_bins(values: Sequence[float], k: int = QUANTILE_BIN_COUNT) -> QuantileBins:
    """Assign each value to one of up to k quantile bins.

    Edges sit at the j/k empirical quantiles (linear interpolation);
    a value equal to an edge goes to the lower bin.  Duplicate edges
    collapse, which shrinks the effective bin count.
    """
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("quantile_bins needs at least one value")
    if k < 1:
        raise ValueError("k must be >= 1")
    qs = [j / k for j in range(1, k)]
    edges = np.unique(np.quantile(arr, qs)) if qs else np.array([])
    indices = np.searchsorted(edges, arr, side="left")
    return QuantileBins(
        indices=tuple(int(i) for i in indices),
        edges=tuple(float(e) for e in edges),
        requested=k,
        effective=len(np.unique(indices)),
    )


@dataclass(frozen=True)
class GroupAggregate:
    """Per-(subject_id, site) sums of the stratification covariates."""

    key: GroupKey
    scans: tuple[ScanRecord, ...]
    lesion_count: int
    total_volume_ml: float

    @property
    def n_scans(self) -> int:
        return len(self.scans)


def aggregate_groups(records: Iterable[ScanRecord]) -> list[GroupAggregate]:
    """Group scans by (subject_id, site), in canonical (site, subject) order."""
    by_key: dict[GroupKey, list[ScanRecord]] = {}
    for rec in records:
        by_key.setdefault((rec.subject_id, rec.site), []).append(rec)
    groups = []
    for key in sorted(by_key, key=lambda k: (k[1], k[0])):
        scans = tuple(sorted(by_key[key], key=lambda r: (r.timepoint, r.path)))
        groups.append(
            GroupAggregate(
                key=key,
                scans=scans,
                lesion_count=sum(s.lesion_count for s in scans),
                total_volume_ml=sum(s.total_lesion_volume_ml for s in scans),
            )
        )
    return groups


def build_strata(
    groups: Sequence[GroupAggregate],
    count_bins: QuantileBins,
    volume_bins: QuantileBins,
) -> dict[StratumKey, list[GroupKey]]:
    """Composite (site, count_bin, volume_bin) stratum per group."""
    strata: dict[StratumKey, list[GroupKey]] = {}
    for group, cb, vb in zip(groups, count_bins.indices, volume_bins.indices):
        strata.setdefault((group.key[1], cb, vb), []).append(group.key)
    return strata


def merge_singletons(
    strata: dict[StratumKey, list[GroupKey]],
) -> tuple[dict[StratumKey, list[GroupKey]], list[str], list[str]]:
    """Fold size-1 strata into their nearest same-site stratum.

    Distance is Euclidean in (count_bin, volume_bin) space with ties
    going to the lexicographically lower bin pair.  A site holding one
    group in total cannot merge; it is left as-is and flagged.
    """
    merged = {k: list(v) for k, v in strata.items()}
    merge_log: list[str] = []
    flags: list[str] = []
    stuck: set[StratumKey] = set()
    while True:
        singles = sorted(k for k, v in merged.items() if len(v) == 1 and k not in stuck)
        if not singles:
            break
        source = singles[0]
        site, cb, vb = source
        candidates = [k for k in merged if k != source and k[0] == site]
        if not candidates:
            stuck.add(source)
            flags.append(f"singleton stratum {source} kept: site {site} has one group")
            continue
        target = min(
            candidates,
            key=lambda k: (math.hypot(k[1] - cb, k[2] - vb), (k[1], k[2])),
        )
        merged[target].extend(merged.pop(source))
        merge_log.append(f"merged stratum {source} into {target}")
    return merged, flags, merge_log


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _stratum_rng(seed: int, stratum_id: str) -> np.random.Generator:
    digest = hashlib.blake2b(stratum_id.encode("utf-8"), digest_size=8).digest()
    entropy = np.random.SeedSequence([seed, int.from_bytes(digest, "big")])
    return np.random.Generator(np.random.PCG64(entropy))


def _stratum_id(key: StratumKey) -> str:
    return f"site={key[0]}|count_bin={key[1]}|volume_bin={key[2]}"


def _group_id(key: GroupKey) -> str:
    return f"{key[0]}@{key[1]}"


@dataclass(frozen=True)
class DescriptiveStats:
    mean: float
    std: float
    q1: float
    median: float
    q3: float

    @staticmethod
    def of(values: Sequence[float]) -> "DescriptiveStats":
        arr = np.asarray(values, dtype=np.float64)
        q1, med, q3 = np.quantile(arr, [0.25, 0.5, 0.75])
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        return DescriptiveStats(
            mean=float(arr.mean()), std=std, q1=float(q1), median=float(med), q3=float(q3)
        )

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "q1": self.q1,
            "median": self.median,
            "q3": self.q3,
        }


@dataclass(frozen=True)
class SplitSideStats:
    """Distribution characteristics of one partition."""

    n_scans: int
    n_groups: int
    site_percent: dict[str, float]
    modality_percent: dict[str, float]
    field_strength_percent: dict[str, float]
    lesion_count: DescriptiveStats
    total_volume_ml: DescriptiveStats

    def to_dict(self) -> dict:
        return {
            "n_scans": self.n_scans,
            "n_groups": self.n_groups,
            "site_percent": self.site_percent,
            "modality_percent": self.modality_percent,
            "field_strength_percent": self.field_strength_percent,
            "lesion_count": self.lesion_count.to_dict(),
            "total_volume_ml": self.total_volume_ml.to_dict(),
        }


@dataclass(frozen=True)
class SplitReport:
    train: SplitSideStats
    test: SplitSideStats
    achieved_train_fraction: float
    flags: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "train": self.train.to_dict(),
            "test": self.test.to_dict(),
            "achieved_train_fraction": self.achieved_train_fraction,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class SplitResult:
    train: tuple[ScanRecord, ...]
    test: tuple[ScanRecord, ...]
    strata_assignment: dict[str, str]  # group id -> stratum id
    seed: int
    ratio: float
    report: SplitReport
    flags: tuple[str, ...]
    merge_log: tuple[str, ...]
    bin_edges: dict[str, tuple[float, ...]]
    effective_bins: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "ratio": self.ratio,
            "prng": PRNG_CONTRACT,
            "train": [r.to_dict() for r in self.train],
            "test": [r.to_dict() for r in self.test],
            "strata_assignment": self.strata_assignment,
            "report": self.report.to_dict(),
            "flags": list(self.flags),
            "merge_log": list(self.merge_log),
            "quantile_bins": {
                "lesion_count": {
                    "edges": list(self.bin_edges["lesion_count"]),
                    "effective": self.effective_bins["lesion_count"],
                },
                "total_volume_ml": {
                    "edges": list(self.bin_edges["total_volume_ml"]),
                    "effective": self.effective_bins["total_volume_ml"],
                },
            },
        }


def _percent_by(records: Sequence[ScanRecord], attr: str) -> dict[str, float]:
    counts: dict[str, int] = {}
    for rec in records:
        value = getattr(rec, attr)
        counts[value] = counts.get(value, 0) + 1
    return {k: 100.0 * v / len(records) for k, v in sorted(counts.items())}


def _side_stats(records: Sequence[ScanRecord]) -> SplitSideStats:
    return SplitSideStats(
        n_scans=len(records),
        n_groups=len({(r.subject_id, r.site) for r in records}),
        site_percent=_percent_by(records, "site"),
        modality_percent=_percent_by(records, "modality"),
        field_strength_percent=_percent_by(records, "field_strength"),
        lesion_count=DescriptiveStats.of([r.lesion_count for r in records]),
        total_volume_ml=DescriptiveStats.of(
            [r.total_lesion_volume_ml for r in records]
        ),
    )


def _canonical_scan_order(records: Iterable[ScanRecord]) -> tuple[ScanRecord, ...]:
    return tuple(
        sorted(records, key=lambda r: (r.site, r.subject_id, r.timepoint, r.path))
    )


def stratified_group_split(
    records: Sequence[ScanRecord], ratio: float = 0.8, seed: int = 0
) -> SplitResult:
    """Split scans into train/test with per-stratum quotas.

    Per stratum, groups are shuffled and the first round-half-up
    (ratio * stratum size) fill the train side.  A correction pass then
    moves whole groups (respecting per-stratum balance within one group)
    until the overall train scan count is within one group of the target
    ratio.
    """
    if not records:
        raise ValueError("no records to split")
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    if seed < 0 or seed > 2**64 - 1:
        raise ValueError("seed must fit an unsigned 64-bit integer")

    groups = aggregate_groups(records)
    count_bins = quantile_bins([g.lesion_count for g in groups])
    volume_bins = quantile_bins([g.total_volume_ml for g in groups])
    strata, flags, merge_log = merge_singletons(
        build_strata(groups, count_bins, volume_bins)
    )

    by_key = {g.key: g for g in groups}
    assignment: dict[GroupKey, StratumKey] = {}
    train_keys: set[GroupKey] = set()
    train_count_per_stratum: dict[StratumKey, int] = {}
    for stratum in sorted(strata):
        members = sorted(strata[stratum], key=lambda k: (k[1], k[0]))
        rng = _stratum_rng(seed, _stratum_id(stratum))
        order = rng.permutation(len(members))
        quota = _round_half_up(ratio * len(members))
        chosen = [members[i] for i in order[:quota]]
        train_keys.update(chosen)
        train_count_per_stratum[stratum] = quota
        for key in members:
            assignment[key] = stratum

    flags = list(flags)
    _correction_pass(
        strata,
        by_key,
        train_keys,
        train_count_per_stratum,
        ratio,
        flags,
    )

    train_records = _canonical_scan_order(
        r for g in groups if g.key in train_keys for r in g.scans
    )
    test_records = _canonical_scan_order(
        r for g in groups if g.key not in train_keys for r in g.scans
    )
    if not train_records or not test_records:
        raise ValueError(
            "split left one partition empty; provide more groups or adjust ratio"
        )

    total = len(train_records) + len(test_records)
    report = SplitReport(
        train=_side_stats(train_records),
        test=_side_stats(test_records),
        achieved_train_fraction=len(train_records) / total,
        flags=tuple(flags),
    )
    return SplitResult(
        train=train_records,
        test=test_records,
        strata_assignment={
            _group_id(k): _stratum_id(s) for k, s in sorted(assignment.items())
        },
        seed=seed,
        ratio=ratio,
        report=report,
        flags=tuple(flags),
        merge_log=tuple(merge_log),
        bin_edges={
            "lesion_count": count_bins.edges,
            "total_volume_ml": volume_bins.edges,
        },
        effective_bins={
            "lesion_count": count_bins.effective,
            "total_volume_ml": volume_bins.effective,
        },
    )


def _correction_pass(
    strata: dict[StratumKey, list[GroupKey]],
    by_key: dict[GroupKey, "GroupAggregate"],
    train_keys: set[GroupKey],
    train_counts: dict[StratumKey, int],
    ratio: float,
    flags: list[str],
) -> None:
    """Nudge the overall scan ratio toward the target by moving groups.

    The deviation tolerance is one group's worth of scans (the largest
    group); moves must keep each stratum's train group count within one
    group of ratio * size.
    """
    total_scans = sum(g.n_scans for g in by_key.values())
    target = ratio * total_scans
    tolerance = max(g.n_scans for g in by_key.values())
    train_scans = sum(by_key[k].n_scans for k in train_keys)

    moved = 0
    while abs(train_scans - target) > tolerance:
        to_test = train_scans > target
        best: tuple[float, StratumKey, GroupKey] | None = None
        for stratum in sorted(strata):
            size = len(strata[stratum])
            count = train_counts[stratum]
            new_count = count - 1 if to_test else count + 1
            if new_count < 0 or new_count > size:
                continue
            if abs(new_count - ratio * size) > 1.0:
                continue
            members = sorted(strata[stratum], key=lambda k: (k[1], k[0]))
            for key in members:
                if (key in train_keys) != to_test:
                    continue
                delta = -by_key[key].n_scans if to_test else by_key[key].n_scans
                dev = abs(train_scans + delta - target)
                if best is None or dev < best[0]:
                    best = (dev, stratum, key)
                break  # first eligible group per stratum keeps moves canonical
        if best is None or best[0] >= abs(train_scans - target):
            flags.append(
                "correction pass stopped: no group move improves the scan ratio"
            )
            break
        _, stratum, key = best
        if to_test:
            train_keys.discard(key)
            train_counts[stratum] -= 1
            train_scans -= by_key[key].n_scans
        else:
            train_keys.add(key)
            train_counts[stratum] += 1
            train_scans += by_key[key].n_scans
        moved += 1
    if moved:
        flags.append(f"correction pass moved {moved} group(s)")


def verify_split(result: SplitResult) -> SplitReport:
    """Re-check group integrity and return the distribution report."""
    train_groups = {(r.subject_id, r.site) for r in result.train}
    test_groups = {(r.subject_id, r.site) for r in result.test}
    overlap = train_groups & test_groups
    if overlap:
        raise SplitIntegrityError(
            f"groups present in both partitions: {sorted(overlap)[:5]}"
        )
    total = len(result.train) + len(result.test)
    return SplitReport(
        train=_side_stats(result.train),
        test=_side_stats(result.test),
        achieved_train_fraction=len(result.train) / total,
        flags=result.flags,
    )
