"""Per-scan feature tensors, Gram-matrix PCA and correlation utilities.

Feature tensors carry six named axes (fold, batch, channel, depth,
height, width).  Reduction averages folds, then batch, then flattens
channel-major.  PCA is fitted on the training matrix only, through the
n x n Gram matrix because feature length dwarfs the sample count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

CANONICAL_AXES = ("fold", "batch", "channel", "depth", "height", "width")


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    """One scan's feature tensor with named axes."""

    scan_id: str
    axes: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        if sorted(self.axes) != sorted(CANONICAL_AXES):
            raise ValueError(
                f"axes must be a permutation of {CANONICAL_AXES}, got {self.axes}"
            )
        if self.values.ndim != len(self.axes):
            raise ValueError(
                f"tensor rank {self.values.ndim} does not match {len(self.axes)} axes"
            )


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Flattened per-scan representation; equal length across one analysis."""

    scan_id: str
    values: np.ndarray


def stack_folds(scan_id: str, folds: Sequence[np.ndarray]) -> FeatureTensor:
    """Stack per-fold (batch, channel, depth, height, width) arrays."""
    if not folds:
        raise ValueError("no folds given")
    shapes = {tuple(f.shape) for f in folds}
    if len(shapes) > 1:
        raise ValueError(f"inconsistent fold shapes: {sorted(shapes)}")
    if len(next(iter(shapes))) != 5:
        raise ValueError("each fold must be 5-dimensional")
    return FeatureTensor(
        scan_id=scan_id,
        axes=CANONICAL_AXES,
        values=np.stack([np.asarray(f, dtype=np.float64) for f in folds]),
    )


def reduce_tensor(tensor: FeatureTensor) -> FeatureVector:
    """Mean over fold, then batch, then flatten channel-major."""
    order = [tensor.axes.index(name) for name in CANONICAL_AXES]
    canon = np.transpose(np.asarray(tensor.values, dtype=np.float64), order)
    reduced = canon.mean(axis=0).mean(axis=0)  # -> (channel, depth, height, width)
    return FeatureVector(scan_id=tensor.scan_id, values=reduced.reshape(-1))


def write_feature_file(tensor: FeatureTensor, directory: str | Path) -> Path:
    """Write <scan_id>.bin (little-endian float32) plus a JSON sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    payload = np.ascontiguousarray(tensor.values, dtype="<f4")
    (directory / f"{tensor.scan_id}.bin").write_bytes(payload.tobytes())
    sidecar = {
        "scan_id": tensor.scan_id,
        "axes": list(tensor.axes),
        "shape": list(tensor.values.shape),
    }
    path = directory / f"{tensor.scan_id}.json"
    path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


def read_feature_file(sidecar_path: str | Path) -> FeatureTensor:
    """Load a tensor from its JSON sidecar and .bin payload."""
    sidecar_path = Path(sidecar_path)
    meta = json.loads(sidecar_path.read_text())
    for key in ("scan_id", "axes", "shape"):
        if key not in meta:
            raise ValueError(f"feature sidecar {sidecar_path.name}: missing {key}")
    shape = tuple(int(s) for s in meta["shape"])
    bin_path = sidecar_path.with_suffix(".bin")
    raw = bin_path.read_bytes()
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise ValueError(
            f"feature payload {bin_path.name}: {len(raw)} bytes, expected {expected}"
        )
    values = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)
    return FeatureTensor(
        scan_id=meta["scan_id"], axes=tuple(meta["axes"]), values=values
    )


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Mean, orthonormal components and explained variances of a PCA fit."""

    mean: np.ndarray
    components: np.ndarray  # (n_components, n_features)
    explained_variance: np.ndarray  # (n_components,)


def pca_fit(train: np.ndarray, n_components: int = 3) -> PcaModel:
    """Fit PCA on (n_samples, n_features) training data via the Gram matrix.

    Component signs follow the convention that each component's
    largest-magnitude coordinate is positive.
    """
    X = np.asarray(train, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("train must be a 2-D (samples, features) matrix")
    n, d = X.shape
    if n < 2:
        raise ValueError("need at least 2 samples")
    if not 1 <= n_components <= min(n - 1, d):
        raise ValueError(
            f"n_components must lie in [1, {min(n - 1, d)}], got {n_components}"
        )
    mean = X.mean(axis=0)
    Xc = X - mean
    gram = Xc @ Xc.T / (n - 1)
    eigenvalues, eigenvectors = np.linalg.eigh(gram)
    order = np.argsort(eigenvalues)[::-1][:n_components]
    top = eigenvalues[order]
    if top[0] <= 0 or top[0] < 1e-30:
        raise ValueError("zero variance: all training samples are identical")
    if top[-1] <= top[0] * 1e-12:
        raise ValueError(
            f"rank deficient: data rank is below {n_components} components"
        )
    components = np.empty((n_components, d))
    for i, idx in enumerate(order):
        v = Xc.T @ eigenvectors[:, idx]
        v /= np.linalg.norm(v)
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        components[i] = v
    return PcaModel(mean=mean, components=components, explained_variance=top)


def pca_project(model: PcaModel, x: np.ndarray) -> np.ndarray:
    """Project rows of x into the fitted component space."""
    arr = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if arr.shape[1] != model.mean.shape[0]:
        raise ValueError(
            f"feature length {arr.shape[1]} does not match model {model.mean.shape[0]}"
        )
    return (arr - model.mean) @ model.components.T


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Product-moment correlation of two equal-length sequences."""
    a = np.asarray(list(x), dtype=np.float64)
    b = np.asarray(list(y), dtype=np.float64)
    if a.size != b.size:
        raise ValueError("sequences must have equal length")
    if a.size < 2:
        raise ValueError("need at least 2 points")
    ac = a - a.mean()
    bc = b - b.mean()
    denom = np.sqrt((ac**2).sum() * (bc**2).sum())
    if denom == 0:
        raise ValueError("constant input has no defined correlation")
    return float((ac * bc).sum() / denom)


def quantile_transform(values: Sequence[float]) -> np.ndarray:
    """Map values to [0, 1] by (rank - 1) / (n - 1), average ranks on ties."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no values given")
    if arr.size == 1:
        return np.array([0.5])
    return (rankdata(arr) - 1.0) / (arr.size - 1.0)
