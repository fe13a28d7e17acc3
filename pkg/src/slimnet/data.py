"""Dataset loading and preparation.

Covers the synthetic parabola set, delimited-text tables, IDX image files
(gzipped or raw), seeded train/test splitting (optionally stratified),
z-score normalization with invertible stored stats, and per-epoch batch
index generation. Loaded datasets are treated as immutable; normalization
returns new Dataset objects.
"""

from __future__ import annotations

import gzip
import hashlib
import struct
import urllib.request
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataError, FormatError, ParameterError, ParseError
from .tensor import RngStream

STD_FLOOR = 1e-12

# fork key namespaces so different consumers of one seed stay independent
_SPLIT_KEY = 11
_BATCH_KEY = 12


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    task: str  # "regression" | "classification"
    n_classes: int | None = None
    feature_stats: tuple[np.ndarray, np.ndarray] | None = None  # (mean, std)
    target_stats: tuple[float, float] | None = None
    name: str = ""

    def __post_init__(self):
        if self.x.ndim != 2 or self.x.shape[0] < 1:
            raise DataError(f"features must be a nonempty 2-D array, got {self.x.shape}")
        if self.y.shape[0] != self.x.shape[0]:
            raise DataError("feature/target row counts differ")
        if self.task not in ("regression", "classification"):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.task == "classification":
            if self.n_classes is None:
                raise ConfigError("classification dataset needs n_classes")
            if self.y.size and (self.y.min() < 0 or self.y.max() >= self.n_classes):
                raise DataError("class index out of range")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def take(self, idx: np.ndarray, name_suffix: str = "") -> "Dataset":
        return replace(self, x=self.x[idx].copy(), y=self.y[idx].copy(),
                       name=self.name + name_suffix)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    stratified: bool = False

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train_fraction must lie in (0,1), got {self.train_fraction}")


def gen_toy(n: int = 40) -> Dataset:
    """The parabola set: n points x equally spaced over [-1, 1], y = -x^2."""
    if n < 2:
        raise ParameterError(f"need at least 2 points, got {n}")
    x = -1.0 + 2.0 * np.arange(n, dtype=np.float64) / (n - 1)
    y = -(x * x)
    return Dataset(x.reshape(-1, 1), y, task="regression", name="toy")


def _parse_cell(cell: str, line_no: int):
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"non-numeric cell {cell!r}", line=line_no) from None


def load_table(path, target_column=-1, delimiter: str | None = ",",
               normalize: bool = False, header="auto",
               task: str = "regression", name: str = "") -> Dataset:
    """Delimited numeric table with one target column.

    delimiter None splits on any whitespace. header may be True, False, or
    "auto" (first row treated as a header when any cell is non-numeric).
    target_column is an index (negative ok) or, with a header, a name.
    Classification targets are remapped to contiguous 0-based indices.
    """
    with open(path, "r", encoding="utf-8") as f:
        raw = [(i + 1, line.strip()) for i, line in enumerate(f)]
    rows = [(no, line.split(delimiter) if delimiter else line.split())
            for no, line in raw if line]
    if not rows:
        raise DataError(f"{path}: no data rows")

    columns = None
    if header == "auto":
        first = rows[0][1]
        is_head = any(not _is_float(c) for c in first)
    else:
        is_head = bool(header)
    if is_head:
        columns = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
        if not rows:
            raise DataError(f"{path}: header only, no data rows")

    if isinstance(target_column, str):
        if columns is None or target_column not in columns:
            raise ConfigError(f"target column {target_column!r} not found")
        tcol = columns.index(target_column)
    else:
        tcol = int(target_column)

    width = len(rows[0][1])
    if not -width <= tcol < width:
        raise ConfigError(f"target column {tcol} outside 0..{width - 1}")
    tcol %= width
    data = np.empty((len(rows), width))
    for r, (no, cells) in enumerate(rows):
        if len(cells) != width:
            raise ParseError(f"expected {width} cells, got {len(cells)}", line=no)
        for c, cell in enumerate(cells):
            data[r, c] = _parse_cell(cell, no)

    target = data[:, tcol]
    feats = np.delete(data, tcol, axis=1)
    stats = None
    if normalize:
        mean = feats.mean(axis=0)
        std = np.maximum(feats.std(axis=0), STD_FLOOR)
        feats = (feats - mean) / std
        stats = (mean, std)

    if task == "classification":
        values, y = np.unique(target, return_inverse=True)
        return Dataset(feats, y.astype(np.int64), task="classification",
                       n_classes=values.size, feature_stats=stats,
                       name=name or str(path))
    return Dataset(feats, target, task="regression", feature_stats=stats,
                   name=name or str(path))


def _is_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _open_maybe_gzip(path):
    p = str(path)
    return gzip.open(p, "rb") if p.endswith(".gz") else open(p, "rb")


def _read_idx(path, expect_magic: int) -> np.ndarray:
    with _open_maybe_gzip(path) as f:
        head = f.read(4)
        if len(head) < 4:
            raise FormatError(f"{path}: truncated header")
        (magic,) = struct.unpack(">I", head)
        if magic != expect_magic:
            raise FormatError(f"{path}: bad magic {magic:#010x}, expected {expect_magic:#010x}")
        ndim = magic & 0xFF
        dims_raw = f.read(4 * ndim)
        if len(dims_raw) < 4 * ndim:
            raise FormatError(f"{path}: truncated dimension header")
        dims = struct.unpack(f">{ndim}I", dims_raw)
        count = int(np.prod(dims))
        body = f.read(count)
        if len(body) < count:
            raise FormatError(f"{path}: expected {count} data bytes, got {len(body)}")
        return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path) -> Dataset:
    """IDX image/label pair (the classic handwritten-digit layout).

    Images come out flattened to rows scaled to [0,1] by /255; labels are
    integer class indices. Gzipped files are handled by extension.
    """
    images = _read_idx(images_path, 0x00000803)
    labels = _read_idx(labels_path, 0x00000801)
    if images.shape[0] != labels.shape[0]:
        raise DataError(f"{images.shape[0]} images vs {labels.shape[0]} labels")
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    return Dataset(x, y, task="classification", n_classes=int(y.max()) + 1,
                   name=str(images_path))


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Seeded disjoint exhaustive split; stratified keeps per-class
    proportions within one sample."""
    rng = RngStream(spec.seed).fork(_SPLIT_KEY)
    if spec.stratified:
        if ds.task != "classification":
            raise ConfigError("stratified split needs a classification dataset")
        train_parts, test_parts = [], []
        for c in range(ds.n_classes):
            idx = np.flatnonzero(ds.y == c)
            idx = idx[rng.fork(1, c).permutation(idx.size)]
            k = int(spec.train_fraction * idx.size)
            train_parts.append(idx[:k])
            test_parts.append(idx[k:])
        train_idx = np.concatenate(train_parts)
        test_idx = np.concatenate(test_parts)
        train_idx = train_idx[rng.fork(2, 0).permutation(train_idx.size)]
        test_idx = test_idx[rng.fork(2, 1).permutation(test_idx.size)]
    else:
        perm = rng.permutation(ds.n)
        k = int(spec.train_fraction * ds.n)
        train_idx, test_idx = perm[:k], perm[k:]
    return ds.take(train_idx, ":train"), ds.take(test_idx, ":test")


def batches(n_or_ds, batch_size: int | None, seed: int = 0,
            shuffle: bool = True) -> list[np.ndarray]:
    """Index batches covering every row exactly once; the last one may be
    short. batch_size None (or >= n) is full-batch mode."""
    n = n_or_ds if isinstance(n_or_ds, int) else n_or_ds.n
    if batch_size is None:
        batch_size = n
    if batch_size < 1:
        raise ParameterError(f"batch_size must be >= 1, got {batch_size}")
    order = RngStream(seed).fork(_BATCH_KEY).permutation(n) if shuffle else np.arange(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def standardize_features(train: Dataset, test: Dataset | None = None):
    """Z-score features by train-split stats (std floored); stats stored on
    the returned datasets for de-normalization."""
    mean = train.x.mean(axis=0)
    std = np.maximum(train.x.std(axis=0), STD_FLOOR)
    out_train = replace(train, x=(train.x - mean) / std, feature_stats=(mean, std))
    if test is None:
        return out_train
    out_test = replace(test, x=(test.x - mean) / std, feature_stats=(mean, std))
    return out_train, out_test


def standardize_targets(train: Dataset, test: Dataset | None = None):
    """Z-score regression targets by train-split stats."""
    if train.task != "regression":
        raise ConfigError("target standardization applies to regression only")
    mean = float(train.y.mean())
    std = float(max(train.y.std(), STD_FLOOR))
    out_train = replace(train, y=(train.y - mean) / std, target_stats=(mean, std))
    if test is None:
        return out_train
    out_test = replace(test, y=(test.y - mean) / std, target_stats=(mean, std))
    return out_train, out_test


def denormalize_targets(ds: Dataset, y: np.ndarray) -> np.ndarray:
    if ds.target_stats is None:
        return np.asarray(y)
    mean, std = ds.target_stats
    return np.asarray(y) * std + mean


def fetch(url: str, dest, sha256: str | None = None, timeout: float = 60.0):
    """Download url to dest, verifying a sha256 when given. Local-file
    workflows never need this; it exists for initial data acquisition."""
    with urllib.request.urlopen(url, timeout=timeout) as r:
        blob = r.read()
    if sha256 is not None:
        got = hashlib.sha256(blob).hexdigest()
        if got != sha256:
            raise DataError(f"checksum mismatch for {url}: {got} != {sha256}")
    with open(dest, "wb") as f:
        f.write(blob)
    return dest
