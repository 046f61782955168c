"""Dataset synthesis, file loading, and Dirichlet non-IID partitioning.

The partitioner draws one class-proportion vector p ~ Dir(alpha) per client
(via Gamma(alpha, 1) draws normalized to sum one) and then samples that
client's train and test shards from a shared pool without replacement, so
shards are disjoint across clients and between train and test. A client's
train and test shards follow the same drawn p.

When a class pool runs dry the shortfall is redrawn proportionally from the
classes that still have stock; the number of reallocated samples is reported
per client so runs can record it.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataFormatError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray  # [num_samples x feature_dim], float64
    labels: np.ndarray  # [num_samples], int64 class indices
    num_classes: int

    def __post_init__(self) -> None:
        if self.features.ndim != 2:
            raise ConfigError("features must be 2-D")
        if self.labels.shape != (self.features.shape[0],):
            raise ConfigError("labels must align with features")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ConfigError("label out of range")

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class PartitionSpec:
    alpha: float = 0.1
    num_clients: int = 20
    train_per_client: int = 50
    test_per_client: int = 10
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.alpha <= 0.0:
            raise ConfigError("alpha must be positive")
        if self.num_clients < 1:
            raise ConfigError("num_clients must be >= 1")
        if self.train_per_client < 1 or self.test_per_client < 1:
            raise ConfigError("per-client shard sizes must be >= 1")


@dataclass(frozen=True, eq=False)
class ClientSplit:
    """Index-level shards for one client, plus its drawn class proportions."""

    train_indices: np.ndarray
    test_indices: np.ndarray
    proportions: np.ndarray


@dataclass(frozen=True)
class PartitionReport:
    """Samples reallocated away from their drawn class, per client."""

    resampled_per_client: tuple[int, ...]

    @property
    def total_resampled(self) -> int:
        return sum(self.resampled_per_client)


def generate_synthetic(
    num_classes: int,
    feature_dim: int,
    samples_per_class: int,
    seed: int,
    separation: float = 3.0,
) -> Dataset:
    """Gaussian class clusters: one seeded mean per class, unit-variance samples.

    ``separation`` scales the class means; 0 collapses all means to the origin.
    """
    if num_classes < 1 or feature_dim < 1 or samples_per_class < 1:
        raise ConfigError("all synthetic-data counts must be positive")
    rng = np.random.default_rng(seed)
    means = separation * rng.standard_normal((num_classes, feature_dim))
    features = np.empty((num_classes * samples_per_class, feature_dim), dtype=np.float64)
    labels = np.empty(num_classes * samples_per_class, dtype=np.int64)
    for c in range(num_classes):
        lo = c * samples_per_class
        features[lo : lo + samples_per_class] = means[c] + rng.standard_normal(
            (samples_per_class, feature_dim)
        )
        labels[lo : lo + samples_per_class] = c
    return Dataset(features=features, labels=labels, num_classes=num_classes)


def subset(ds: Dataset, indices: np.ndarray) -> Dataset:
    return Dataset(
        features=ds.features[indices], labels=ds.labels[indices], num_classes=ds.num_classes
    )


def dirichlet_partition(
    ds: Dataset, spec: PartitionSpec
) -> tuple[list[ClientSplit], PartitionReport]:
    """Split a dataset into disjoint per-client train/test shards."""
    if spec.seed is None:
        raise ConfigError("partition seed must be set")
    needed = spec.num_clients * (spec.train_per_client + spec.test_per_client)
    if ds.num_samples < needed:
        raise ConfigError(
            f"dataset has {ds.num_samples} samples but the partition needs {needed}"
        )

    rng = np.random.default_rng(spec.seed)
    pools: list[list[int]] = [
        rng.permutation(np.flatnonzero(ds.labels == c)).tolist() for c in range(ds.num_classes)
    ]

    splits: list[ClientSplit] = []
    resampled: list[int] = []
    for _ in range(spec.num_clients):
        gamma = rng.gamma(spec.alpha, 1.0, size=ds.num_classes)
        total = gamma.sum()
        proportions = gamma / total if total > 0.0 else np.full(ds.num_classes, 1.0 / ds.num_classes)
        train_idx, r_train = _draw_without_replacement(
            pools, proportions, spec.train_per_client, rng
        )
        test_idx, r_test = _draw_without_replacement(pools, proportions, spec.test_per_client, rng)
        splits.append(
            ClientSplit(
                train_indices=np.asarray(train_idx, dtype=np.int64),
                test_indices=np.asarray(test_idx, dtype=np.int64),
                proportions=proportions,
            )
        )
        resampled.append(r_train + r_test)
    return splits, PartitionReport(resampled_per_client=tuple(resampled))


def _draw_without_replacement(
    pools: list[list[int]], proportions: np.ndarray, count: int, rng: np.random.Generator
) -> tuple[list[int], int]:
    """Take ``count`` samples with class counts ~ Multinomial(count, p).

    Classes without enough stock surrender their shortfall, which is redrawn
    from the remaining classes with proportions renormalized; the second
    return value counts those reallocated samples.
    """
    taken: list[int] = []
    wanted = rng.multinomial(count, proportions)
    resampled = 0
    while True:
        shortfall = 0
        for c, want in enumerate(wanted):
            grab = min(int(want), len(pools[c]))
            for _ in range(grab):
                taken.append(pools[c].pop())
            shortfall += int(want) - grab
        if shortfall == 0:
            return taken, resampled
        resampled += shortfall
        available = np.array([len(p) > 0 for p in pools], dtype=bool)
        if not available.any():
            raise ConfigError("sample pool exhausted; dataset too small for the partition")
        weights = np.where(available, proportions, 0.0)
        total = weights.sum()
        if total <= 0.0:
            weights = available.astype(np.float64)
            total = weights.sum()
        wanted = rng.multinomial(shortfall, weights / total)


def load_idx(images_path: str | Path, labels_path: str | Path | None = None) -> Dataset:
    """Read an IDX image/label file pair (the classic MNIST container).

    The image file layout is big-endian:
      offset 0: magic 0x00000803, then three u32 sizes (count, rows, cols),
      then count*rows*cols unsigned bytes of pixels.
    The label file uses magic 0x00000801, one u32 count, then count bytes.
    Pixels are scaled to [0, 1]; labels pair with images by index. When
    ``labels_path`` is omitted it is derived by replacing "images" -> "labels"
    and "idx3" -> "idx1" in the image path.
    """
    images_path = Path(images_path)
    if labels_path is None:
        derived = images_path.name.replace("images", "labels").replace("idx3", "idx1")
        if derived == images_path.name:
            raise DataFormatError(
                f"{images_path}: cannot derive a label file name; pass labels_path"
            )
        labels_path = images_path.with_name(derived)
    labels_path = Path(labels_path)

    images = _read_idx_array(images_path, IDX_IMAGE_MAGIC, 3)
    labels = _read_idx_array(labels_path, IDX_LABEL_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"{images_path}: {images.shape[0]} images but {labels.shape[0]} labels"
        )
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    label_vec = labels.astype(np.int64)
    num_classes = int(label_vec.max()) + 1 if label_vec.size else 0
    return Dataset(features=features, labels=label_vec, num_classes=num_classes)


def _read_idx_array(path: Path, magic: int, ndim: int) -> np.ndarray:
    data = path.read_bytes()
    if len(data) < 4:
        raise DataFormatError(f"{path}: truncated magic, file ends at offset {len(data)}")
    got = struct.unpack_from(">I", data, 0)[0]
    if got != magic:
        raise DataFormatError(
            f"{path}: bad magic 0x{got:08X} at offset 0 (expected 0x{magic:08X})"
        )
    header = 4 + 4 * ndim
    if len(data) < header:
        raise DataFormatError(
            f"{path}: truncated dimension header, file ends at offset {len(data)}"
        )
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    count = 1
    for d in dims:
        count *= d
    if len(data) != header + count:
        raise DataFormatError(
            f"{path}: expected {header + count} bytes for shape {dims}, "
            f"file ends at offset {len(data)}"
        )
    return np.frombuffer(data, dtype=np.uint8, offset=header).reshape(dims)


def load_csv(path: str | Path) -> Dataset:
    """Read ``label,f0,f1,...`` rows; the header row is required."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "label":
        raise DataFormatError(f"{path}: expected header starting with 'label'")
    width = len(rows[0]) - 1
    if width < 1:
        raise DataFormatError(f"{path}: header declares no feature columns")
    labels = np.empty(len(rows) - 1, dtype=np.int64)
    features = np.empty((len(rows) - 1, width), dtype=np.float64)
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != width + 1:
            raise DataFormatError(f"{path}: line {line_no} has {len(row)} fields, expected {width + 1}")
        try:
            labels[line_no - 2] = int(row[0])
            features[line_no - 2] = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {line_no}: {exc}") from exc
    num_classes = int(labels.max()) + 1 if labels.size else 0
    return Dataset(features=features, labels=labels, num_classes=num_classes)
