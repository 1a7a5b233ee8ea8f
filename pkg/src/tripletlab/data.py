"""Dataset construction: synthetic Gaussian clusters and labeled CSV files.

The CSV layout is a header row `f0,...,f{d-1},label` followed by one row
per sample. Features are stored at float32 precision (printed with %.9g,
which round-trips float32 exactly); labels are integers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix with contiguous integer class labels.

    Invariants: labels are 0..C-1 with every class present and holding at
    least 2 samples (one sample cannot form a positive pair).
    """

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels)
        if features.ndim != 2 or features.shape[0] < 1:
            raise ValueError(f"need an (N, d) feature matrix, got shape {features.shape}")
        if labels.shape != (features.shape[0],):
            raise ValueError("labels must be one integer per row")
        labels = labels.astype(np.int64)
        uniq, counts = np.unique(labels, return_counts=True)
        if not np.array_equal(uniq, np.arange(uniq.size)):
            raise ValueError("labels must be contiguous 0..C-1")
        small = uniq[counts < 2]
        if small.size:
            raise ValueError(f"every class needs >= 2 samples; offending classes: {small.tolist()}")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def class_index(self) -> dict:
        """label -> row indices (ascending)."""
        return {int(c): np.where(self.labels == c)[0] for c in range(self.n_classes)}


def generate_synthetic(
    n_classes: int,
    per_class: int,
    input_dim: int,
    center_spread: float = 1.0,
    within_std: float = 1.0,
    seed: int = 0,
) -> LabeledDataset:
    """Gaussian blobs: centers uniform in [-spread, spread]^d, isotropic noise.

    Deterministic per seed. Difficulty is the ratio of within_std to
    center_spread; the defaults give overlapping but separable classes.
    """
    if n_classes < 1 or per_class < 1 or input_dim < 1:
        raise ValueError("n_classes, per_class and input_dim must all be >= 1")
    if within_std < 0:
        raise ValueError("within_std must be nonnegative")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-center_spread, center_spread, size=(n_classes, input_dim))
    features = np.repeat(centers, per_class, axis=0)
    features = features + rng.normal(0.0, within_std, size=features.shape)
    labels = np.repeat(np.arange(n_classes), per_class)
    return LabeledDataset(features, labels)


def save_dataset(dataset: LabeledDataset, path) -> None:
    cols = [f"f{i}" for i in range(dataset.input_dim)] + ["label"]
    feats = dataset.features.astype(np.float32)
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row, label in zip(feats, dataset.labels):
            fh.write(",".join(f"{x:.9g}" for x in row) + f",{label}\n")


def load_dataset(path) -> LabeledDataset:
    """Parse the documented CSV layout; malformed rows report their line number."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = lines[0].split(",")
    if header[-1] != "label":
        raise ValueError(f"{path}: last header column must be 'label', got {header[-1]!r}")
    d = len(header) - 1
    expected = [f"f{i}" for i in range(d)]
    if header[:-1] != expected:
        raise ValueError(f"{path}: feature columns must be f0..f{d-1}")
    features, raw_labels = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != d + 1:
            raise ValueError(f"{path}:{lineno}: expected {d + 1} fields, got {len(parts)}")
        try:
            features.append([float(x) for x in parts[:-1]])
            raw_labels.append(int(parts[-1]))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not features:
        raise ValueError(f"{path}: no data rows")
    labels = np.asarray(raw_labels, dtype=np.int64)
    uniq = np.unique(labels)
    if not np.array_equal(uniq, np.arange(uniq.size)):
        warnings.warn(f"{path}: remapping non-contiguous labels to 0..{uniq.size - 1}", stacklevel=2)
        labels = np.searchsorted(uniq, labels)
    feats = np.asarray(features, dtype=np.float32).astype(np.float64)
    return LabeledDataset(feats, labels)
