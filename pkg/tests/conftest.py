"""Shared fixtures and in-memory volume builders."""

from __future__ import annotations

import numpy as np
import pytest

from lesionbench.labeling import warm_up
from lesionbench.volume_io import MaskVolume, VolumeHeader


@pytest.fixture(scope="session", autouse=True)
def _compile_labeling_kernels():
    # One-time JIT compile so labeling tests measure behaviour, not numba.
    warm_up()


def make_mask(voxels, spacing=(1.0, 1.0, 1.0)) -> MaskVolume:
    """Wrap a dense array as a MaskVolume without touching the filesystem."""
    arr = np.ascontiguousarray(np.asarray(voxels) > 0, dtype=np.uint8)
    if arr.ndim != 3:
        raise ValueError("mask must be 3D")
    header = VolumeHeader(
        dims=tuple(int(d) for d in arr.shape),
        spacing=tuple(float(s) for s in spacing),
        datatype_code=2,
    )
    return MaskVolume(header=header, voxels=arr)


def mask_from_coords(shape, coords, spacing=(1.0, 1.0, 1.0)) -> MaskVolume:
    """Mask with positives at the given (z, y, x) coordinates."""
    arr = np.zeros(shape, dtype=np.uint8)
    for c in coords:
        arr[tuple(c)] = 1
    return make_mask(arr, spacing)


def random_mask(rng, max_dim=32, density=None):
    """Random mask with random shape up to max_dim per axis."""
    dims = tuple(int(d) for d in rng.integers(1, max_dim + 1, size=3))
    p = float(rng.uniform(0.02, 0.7)) if density is None else density
    return (rng.random(dims) < p).astype(np.uint8)
