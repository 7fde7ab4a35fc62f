"""Timed end-to-end labelling + matching on synthetic volumes.

Run as ``python -m lesionbench.bench --size 256``.  Prints one JSON line
with wall time and peak RSS so callers can assert resource budgets.
The numba kernel is compiled on a tiny warm-up volume before timing.
"""

from __future__ import annotations

import argparse
import json
import resource
import sys
import time

import numpy as np

from .labeling import label_components, warm_up
from .lesion_metrics import detection_metrics, match_lesions
from .volume_io import MaskVolume, VolumeHeader
from .voxel_metrics import confusion_counts


def synthetic_pair(size: int, seed: int = 7, lesions: int = 400) -> tuple[MaskVolume, MaskVolume]:
    """Random box-lesion gt/pred pair at roughly clinical sparsity."""
    rng = np.random.Generator(np.random.PCG64(seed))
    header = VolumeHeader(dims=(size, size, size), spacing=(0.5, 0.5, 0.5), datatype_code=2)
    gt = np.zeros((size, size, size), dtype=np.uint8)
    pred = np.zeros((size, size, size), dtype=np.uint8)
    for _ in range(lesions):
        cx, cy, cz = rng.integers(2, size - 10, size=3)
        w, h, d = rng.integers(2, 9, size=3)
        gt[cx : cx + w, cy : cy + h, cz : cz + d] = 1
        jitter = rng.integers(-2, 3, size=3)
        px, py, pz = np.clip([cx, cy, cz] + jitter, 0, size - 10)
        pred[px : px + w, py : py + h, pz : pz + d] = 1
    return (
        MaskVolume(header=header, voxels=gt),
        MaskVolume(header=header, voxels=pred),
    )


def run(size: int, seed: int) -> dict:
    gt, pred = synthetic_pair(size, seed)
    warm_up()
    start = time.perf_counter()
    gt_labels = label_components(gt, 26)
    pred_labels = label_components(pred, 26)
    counts = confusion_counts(gt, pred)
    match = match_lesions(gt_labels, pred_labels)
    detection = detection_metrics(match, gt_empty=counts.gt_positive == 0)
    elapsed = time.perf_counter() - start
    peak_kb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    return {
        "size": size,
        "seconds": round(elapsed, 4),
        "peak_rss_mb": round(peak_kb / 1024.0, 1),
        "gt_components": gt_labels.component_count,
        "pred_components": pred_labels.component_count,
        "tpl": detection.tpl_count,
        "fpl": detection.fpl_count,
        "fnl": detection.fnl_count,
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=256)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)
    print(json.dumps(run(args.size, args.seed)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
