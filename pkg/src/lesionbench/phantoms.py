"""Synthetic box-lesion volumes with hand-computable metrics.

The suite covers the degenerate conventions end to end: an exact match,
a one-voxel-overlap detection, a missed-everything scan and two
lesion-free scans (one clean, one with a spurious prediction).  All
files are written deterministically so reruns are byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .report import write_csv
from .volume_io import MaskVolume, VolumeHeader, save_mask

DIMS = (48, 48, 48)
Box = tuple[slice, slice, slice]


def _box(x0, x1, y0, y1, z0, z1) -> Box:
    return (slice(x0, x1), slice(y0, y1), slice(z0, z1))


@dataclass(frozen=True)
class PhantomScene:
    scan_id: str
    site: str
    modality: str
    field_strength: str
    disease: str
    spacing: tuple[float, float, float]
    gt_boxes: tuple[Box, ...]
    pred_boxes: tuple[Box, ...]
    with_atlas: bool = False
    expected: dict = field(default_factory=dict)


SCENES = (
    PhantomScene(
        scan_id="s001",
        site="A",
        modality="MP2RAGE",
        field_strength="3T",
        disease="MS",
        spacing=(1.0, 1.0, 1.2),
        # L1 hit exactly, L2 clipped to a single shared voxel, L3 missed.
        gt_boxes=(
            _box(4, 8, 4, 8, 4, 8),
            _box(20, 24, 20, 22, 8, 10),
            _box(30, 34, 30, 34, 30, 32),
        ),
        pred_boxes=(
            _box(4, 8, 4, 8, 4, 8),
            _box(23, 27, 21, 24, 9, 12),
            _box(40, 43, 40, 43, 40, 42),
        ),
        with_atlas=True,
        expected={"tpl": 2, "fpl": 1, "fnl": 1, "tp": 65, "fp": 53, "fn": 47},
    ),
    PhantomScene(
        scan_id="s002",
        site="A",
        modality="MP2RAGE",
        field_strength="3T",
        disease="MS",
        spacing=(1.0, 1.0, 1.2),
        gt_boxes=(_box(10, 20, 10, 20, 10, 14),),
        pred_boxes=(_box(10, 20, 10, 20, 10, 14),),
        with_atlas=True,
        expected={"tpl": 1, "fpl": 0, "fnl": 0, "tp": 400, "fp": 0, "fn": 0},
    ),
    PhantomScene(
        scan_id="s003",
        site="B",
        modality="MPRAGE",
        field_strength="3T",
        disease="MS",
        spacing=(1.0, 1.0, 1.0),
        gt_boxes=(_box(6, 10, 6, 10, 6, 9), _box(30, 36, 30, 34, 20, 24)),
        pred_boxes=(),
        expected={"tpl": 0, "fpl": 0, "fnl": 2, "tp": 0, "fp": 0, "fn": 144},
    ),
    PhantomScene(
        scan_id="s004",
        site="B",
        modality="MPRAGE",
        field_strength="3T",
        disease="MS-mimic",
        spacing=(1.0, 1.0, 1.0),
        gt_boxes=(),
        pred_boxes=(),
        expected={"tpl": 0, "fpl": 0, "fnl": 0, "tp": 0, "fp": 0, "fn": 0},
    ),
    PhantomScene(
        scan_id="s005",
        site="B",
        modality="MPRAGE",
        field_strength="3T",
        disease="MS-mimic",
        spacing=(1.0, 1.0, 1.0),
        gt_boxes=(),
        pred_boxes=(_box(12, 16, 12, 16, 12, 15),),
        expected={"tpl": 0, "fpl": 1, "fnl": 0, "tp": 0, "fp": 48, "fn": 0},
    ),
)

ATLAS_BOXES = {
    "cortex": _box(0, 24, 0, 24, 0, 24),
    "wm": _box(24, 48, 24, 48, 24, 48),
}


def _mask_from_boxes(boxes, spacing) -> MaskVolume:
    grid = np.zeros(DIMS, dtype=np.uint8)
    for box in boxes:
        grid[box] = 1
    header = VolumeHeader(dims=DIMS, spacing=spacing, datatype_code=2)
    return MaskVolume(header=header, voxels=grid)


def build_phantom_suite(out_dir: str | Path) -> Path:
    """Write the suite and return the pairs manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    atlas_manifest = out_dir / "atlas_manifest.csv"
    atlas_rows = []
    for rank, (name, box) in enumerate(sorted(ATLAS_BOXES.items()), start=1):
        mask = _mask_from_boxes([box], (1.0, 1.0, 1.2))
        path = out_dir / f"atlas_{name}.nii.gz"
        save_mask(mask, path)
        atlas_rows.append([name, path.name, rank])
    write_csv(atlas_manifest, ["class", "path", "priority_rank"], atlas_rows)

    manifest_rows = []
    for scene in SCENES:
        gt = _mask_from_boxes(scene.gt_boxes, scene.spacing)
        pred = _mask_from_boxes(scene.pred_boxes, scene.spacing)
        gt_path = out_dir / f"{scene.scan_id}_gt.nii.gz"
        pred_path = out_dir / f"{scene.scan_id}_pred.nii.gz"
        save_mask(gt, gt_path)
        save_mask(pred, pred_path)
        manifest_rows.append(
            [
                scene.scan_id,
                gt_path.name,
                pred_path.name,
                scene.site,
                scene.modality,
                scene.field_strength,
                scene.disease,
                atlas_manifest.name if scene.with_atlas else "",
            ]
        )
    manifest = out_dir / "pairs_manifest.csv"
    write_csv(
        manifest,
        [
            "scan_id",
            "gt_path",
            "pred_path",
            "site",
            "modality",
            "field_strength",
            "disease",
            "atlas_manifest",
        ],
        manifest_rows,
    )
    return manifest
