"""Datasets, seeded splits and shuffled mini-batch streams.

All randomness comes from ``numpy.random.default_rng`` (PCG64) seeded
explicitly by the caller.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class DataError(ValueError):
    """Malformed input file or an impossible dataset request."""


@dataclass(frozen=True)
class LabeledInstance:
    features: np.ndarray
    label: int
    id: int


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (n, feature_dim) float64
    labels: np.ndarray  # (n,) int64
    ids: np.ndarray  # (n,) int64, unique
    num_classes: int

    def __post_init__(self):
        n = len(self.labels)
        if n == 0:
            raise DataError("dataset is empty")
        if self.features.shape[0] != n or self.ids.shape != (n,):
            raise DataError("features, labels and ids disagree in length")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise DataError(f"labels outside [0, {self.num_classes})")

    def __len__(self):
        return len(self.labels)

    @property
    def feature_dim(self):
        return self.features.shape[1]

    def __getitem__(self, i):
        return LabeledInstance(self.features[i], int(self.labels[i]), int(self.ids[i]))

    def take(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.features[rows], self.labels[rows], self.ids[rows], self.num_classes)


@dataclass(frozen=True)
class MiniBatch:
    rows: np.ndarray  # positions in the source dataset
    features: np.ndarray
    labels: np.ndarray
    ids: np.ndarray
    batch_index: int

    def __len__(self):
        return len(self.rows)


@dataclass(frozen=True)
class SplitSpec:
    ndf_subset_size: int
    dev_size: int
    seed: int = 0


def _read_header(blob, n_words, magic, path):
    size = 4 * n_words
    if len(blob) < size:
        raise DataError(f"{path}: truncated header ({len(blob)} bytes)")
    words = struct.unpack(f">{n_words}I", blob[:size])
    if words[0] != magic:
        raise DataError(f"{path}: bad magic 0x{words[0]:08x}, expected 0x{magic:08x}")
    return words[1:], blob[size:]


def load_mnist(images_path, labels_path, num_classes=10):
    """Read an IDX image/label pair; pixels are scaled to [0, 1]."""
    images_path, labels_path = Path(images_path), Path(labels_path)
    (count, rows, cols), pixels = _read_header(images_path.read_bytes(), 4, IMAGE_MAGIC, images_path)
    (n_labels,), label_bytes = _read_header(labels_path.read_bytes(), 2, LABEL_MAGIC, labels_path)
    if count != n_labels:
        raise DataError(f"{count} images but {n_labels} labels")
    dim = rows * cols
    if len(pixels) < count * dim:
        raise DataError(f"{images_path}: truncated pixel data")
    if len(label_bytes) < count:
        raise DataError(f"{labels_path}: truncated label data")
    if count == 0:
        raise DataError(f"{images_path}: no images")
    features = np.frombuffer(pixels, dtype=np.uint8, count=count * dim)
    features = features.reshape(count, dim).astype(np.float64) / 255.0
    labels = np.frombuffer(label_bytes, dtype=np.uint8, count=count).astype(np.int64)
    return Dataset(features, labels, np.arange(count, dtype=np.int64), num_classes)


def load_mnist_dir(directory, part="train"):
    prefix = "train" if part == "train" else "t10k"
    d = Path(directory)
    return load_mnist(d / f"{prefix}-images-idx3-ubyte", d / f"{prefix}-labels-idx1-ubyte")


def write_idx(images_path, labels_path, images, labels):
    """Write uint8 images of shape (n, rows, cols) and their labels as IDX files."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(images_path).write_bytes(struct.pack(">4I", IMAGE_MAGIC, n, rows, cols) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">2I", LABEL_MAGIC, len(labels)) + labels.tobytes())


def generate_blobs(num_classes, per_class, feature_dim, spread, seed):
    """Isotropic Gaussian clusters around standard-normal class centers.

    Instances are ordered class by class; ids follow that order.
    """
    if min(num_classes, per_class, feature_dim) <= 0:
        raise DataError("blob counts must be positive")
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((num_classes, feature_dim))
    noise = rng.standard_normal((num_classes, per_class, feature_dim))
    features = (centers[:, None, :] + spread * noise).reshape(-1, feature_dim)
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), per_class)
    return Dataset(features, labels, np.arange(len(labels), dtype=np.int64), num_classes)


def split(dataset, spec):
    """Sample D' from ``dataset`` and carve a dev set out of it.

    Returns ``(policy_train, dev, remainder)``; the three are disjoint by id.
    """
    n = len(dataset)
    if not 0 < spec.dev_size < spec.ndf_subset_size <= n:
        raise DataError(f"need 0 < dev_size < ndf_subset_size <= {n}, "
                        f"got {spec.dev_size}, {spec.ndf_subset_size}")
    perm = np.random.default_rng(spec.seed).permutation(n)
    dev = perm[:spec.dev_size]
    train = perm[spec.dev_size:spec.ndf_subset_size]
    rest = perm[spec.ndf_subset_size:]
    return dataset.take(train), dataset.take(dev), (dataset.take(rest) if len(rest) else None)


def subsample(dataset, size, seed):
    """Uniformly sampled subset of ``size`` instances, kept in original order."""
    if not 0 < size <= len(dataset):
        raise DataError(f"subset size {size} outside (0, {len(dataset)}]")
    rows = np.sort(np.random.default_rng(seed).choice(len(dataset), size=size, replace=False))
    return dataset.take(rows)


def epoch_stream(dataset, batch_size, epoch_seed, first_index=0):
    """Yield one shuffled epoch of full mini-batches; a short tail is dropped."""
    if batch_size <= 0:
        raise DataError("batch size must be positive")
    if batch_size > len(dataset):
        raise DataError(f"batch size {batch_size} exceeds dataset size {len(dataset)}")
    perm = np.random.default_rng(epoch_seed).permutation(len(dataset))
    for k in range(len(dataset) // batch_size):
        rows = perm[k * batch_size:(k + 1) * batch_size]
        yield MiniBatch(rows, dataset.features[rows], dataset.labels[rows],
                        dataset.ids[rows], first_index + k)
