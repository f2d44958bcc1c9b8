"""Datasets: synthetic blobs, IDX ingestion, Dirichlet partitioning, corruption."""

import struct
from dataclasses import dataclass

import numpy as np
from sklearn.model_selection import train_test_split

from .exceptions import DataFormatError, EmptyDatasetError, InfeasiblePartitionError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Row-major feature matrix ``(n, d)`` with integer labels in ``[0, n_classes)``."""

    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError("labels must be 1-D and match the number of rows")
        if X.shape[0] == 0:
            raise EmptyDatasetError("dataset has no rows")
        if not np.all(np.isfinite(X)):
            raise ValueError("features contain NaN or Inf")
        if y.min() < 0 or y.max() >= self.n_classes:
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def subset(self, indices):
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.n_classes)

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.n_classes)


@dataclass(frozen=True, eq=False)
class PartitionPlan:
    shards: list
    lam: float

    def sizes(self):
        return [len(s) for s in self.shards]


def synthetic_centers(n_classes, dim, class_separation):
    """Generating centers used by :func:`generate_synthetic`, before centering.

    Class ``k < dim`` sits on ``+e_k``, class ``dim <= k < 2*dim`` on
    ``-e_{k-dim}``, both scaled by ``class_separation / sqrt(2)``, so every
    pair of centers is at least ``class_separation`` apart.
    """
    if n_classes > 2 * dim:
        raise ValueError(f"at most 2*dim={2 * dim} classes supported, got {n_classes}")
    scale = class_separation / np.sqrt(2.0)
    centers = np.zeros((n_classes, dim))
    for k in range(n_classes):
        axis, sign = (k, 1.0) if k < dim else (k - dim, -1.0)
        centers[k, axis] = sign * scale
    return centers


def _balanced_counts(n_samples, n_classes):
    counts = np.full(n_classes, n_samples // n_classes)
    counts[: n_samples % n_classes] += 1
    return counts


def generate_synthetic(n_samples, n_classes, dim, class_separation, seed):
    """Gaussian blobs with unit isotropic noise, near-equal class counts.

    Features are shifted by the count-weighted mean of the centers so the
    population mean is zero.
    """
    if n_samples < n_classes:
        raise ValueError("n_samples must be >= n_classes")
    if class_separation <= 0:
        raise ValueError("class_separation must be > 0")
    rng = np.random.default_rng(seed)
    counts = _balanced_counts(n_samples, n_classes)
    centers = synthetic_centers(n_classes, dim, class_separation)
    centers = centers - (counts @ centers) / n_samples
    y = np.repeat(np.arange(n_classes), counts)
    X = centers[y] + rng.standard_normal((n_samples, dim))
    order = rng.permutation(n_samples)
    return LabeledDataset(X[order], y[order], n_classes)


def _read_idx_header(buf, path, magic, ndims):
    header_len = 4 * (1 + ndims)
    if len(buf) < 4:
        raise DataFormatError(f"{path}: file too short for IDX magic", field="magic")
    (got,) = struct.unpack(">I", buf[:4])
    if got != magic:
        raise DataFormatError(
            f"{path}: bad magic 0x{got:08x}, expected 0x{magic:08x}", field="magic"
        )
    if len(buf) < header_len:
        raise DataFormatError(f"{path}: truncated dimension header", field="dims")
    dims = struct.unpack(f">{ndims}I", buf[4:header_len])
    expected = int(np.prod(dims, dtype=np.int64))
    if len(buf) - header_len != expected:
        raise DataFormatError(
            f"{path}: payload has {len(buf) - header_len} bytes, header promises {expected}",
            field="payload",
        )
    payload = np.frombuffer(buf, dtype=np.uint8, offset=header_len)
    return dims, payload


def load_idx(images_path, labels_path):
    """Read an IDX image/label file pair (the MNIST container format).

    Pixels are scaled to [0, 1] and each image flattened row-major.
    """
    with open(images_path, "rb") as fh:
        ibuf = fh.read()
    with open(labels_path, "rb") as fh:
        lbuf = fh.read()
    (n_img, rows, cols), pixels = _read_idx_header(ibuf, images_path, IDX_IMAGES_MAGIC, 3)
    (n_lab,), labels = _read_idx_header(lbuf, labels_path, IDX_LABELS_MAGIC, 1)
    if n_img != n_lab:
        raise DataFormatError(
            f"image count {n_img} != label count {n_lab}", field="count"
        )
    if n_img == 0:
        raise DataFormatError("IDX files contain no items", field="count")
    X = pixels.reshape(n_img, rows * cols).astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    return LabeledDataset(X, y, max(int(y.max()) + 1, 2))


def dirichlet_partition(dataset, n_clients, lam, seed):
    """Label-skewed split: each class is divided by Dirichlet(lam, ..., lam) shares.

    Clients left empty get one sample moved over from the currently largest
    shard, so every client ends with at least one row.
    """
    if n_clients < 1:
        raise ValueError("n_clients must be >= 1")
    if lam <= 0:
        raise ValueError("lambda must be > 0")
    if len(dataset) < n_clients:
        raise InfeasiblePartitionError(
            f"{len(dataset)} samples cannot cover {n_clients} clients"
        )
    rng = np.random.default_rng(seed)
    shards = [[] for _ in range(n_clients)]
    for c in range(dataset.n_classes):
        idx = np.flatnonzero(dataset.labels == c)
        if idx.size == 0:
            continue
        idx = rng.permutation(idx)
        shares = rng.dirichlet(np.full(n_clients, lam))
        cuts = (np.cumsum(shares) * idx.size).astype(np.int64)[:-1]
        for shard, part in zip(shards, np.split(idx, cuts)):
            shard.extend(part.tolist())
    for i in range(n_clients):
        if not shards[i]:
            donor = max(range(n_clients), key=lambda j: len(shards[j]))
            shards[i].append(shards[donor].pop())
    return PartitionPlan([np.array(sorted(s), dtype=np.int64) for s in shards], float(lam))


def corrupt_features(dataset, sigma, seed):
    """Copy of ``dataset`` with i.i.d. N(0, sigma^2) added to every feature."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return LabeledDataset(dataset.features.copy(), dataset.labels.copy(), dataset.n_classes)
    rng = np.random.default_rng(seed)
    X = dataset.features + rng.normal(0.0, sigma, size=dataset.features.shape)
    return LabeledDataset(X, dataset.labels.copy(), dataset.n_classes)


def stratified_split(dataset, test_fraction, seed):
    """Stratified ``(train, test)`` holdout."""
    idx = np.arange(len(dataset))
    counts = dataset.class_counts()
    stratify = dataset.labels if counts[counts > 0].min() >= 2 else None
    train_idx, test_idx = train_test_split(
        idx, test_size=test_fraction, stratify=stratify, random_state=seed
    )
    return dataset.subset(np.sort(train_idx)), dataset.subset(np.sort(test_idx))
