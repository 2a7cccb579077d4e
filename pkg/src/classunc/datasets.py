"""Synthetic Gaussian-class datasets, long-tail subsampling, and dataset files.

Class ``c`` is an isotropic Gaussian around a fixed center. Centers sit on a
regular simplex (``dim >= num_classes``), a regular polygon in the first two
coordinates (``2 <= dim < num_classes``), or evenly on a line (``dim == 1``);
in each case neighbouring centers are ``spacing`` apart.

Random streams: every generator call derives its stream from
``SeedSequence([seed, STREAMS[name]])`` so train, test and subsampling draws
never share state even under the same user seed.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from classunc.errors import DatasetFormatError
from classunc.fileio import atomic_write_bytes, atomic_write_text

STREAMS = {"train": 0, "test": 1, "subsample": 2, "duplicate": 3}
BINARY_MAGIC = b"IMBD"


def stream_rng(seed: int, stream: str) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed), STREAMS[stream]])
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    _by_class: list = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64)
        y = np.array(self.labels)
        if x.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {x.shape}")
        if len(x) < 1:
            raise ValueError("empty dataset")
        if y.shape != (len(x),):
            raise ValueError(f"labels shape {y.shape} does not match {len(x)} rows")
        if not np.issubdtype(y.dtype, np.integer):
            raise ValueError("labels must be integers")
        y = y.astype(np.int64)
        if np.any(y < 0) or np.any(y >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(x)):
            raise ValueError("features must be finite")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return len(self.labels)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.num_classes == other.num_classes
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.features, other.features))

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    @property
    def by_class(self) -> list[np.ndarray]:
        if self._by_class is None:
            from classunc.samplers import class_index

            object.__setattr__(self, "_by_class", class_index(self.labels, self.num_classes))
        return self._by_class

    def subset(self, indices) -> "Dataset":
        ix = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[ix], self.labels[ix], self.num_classes)


# --- long-tail cardinalities ----------------------------------------------------


@dataclass(frozen=True)
class LongTailSpec:
    n_bar: int
    imbalance_ratio: float
    num_classes: int

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("long-tail spec needs at least 2 classes")
        if self.imbalance_ratio < 1:
            raise ValueError(f"imbalance ratio must be >= 1, got {self.imbalance_ratio}")
        if self.n_bar < 1:
            raise ValueError(f"n_bar must be >= 1, got {self.n_bar}")


def long_tail_counts(spec: LongTailSpec) -> np.ndarray:
    """``N_c = n_bar / IR**(c / (C - 1))`` rounded half-up, floor 1."""
    if spec.n_bar / spec.imbalance_ratio < 0.5:
        raise ValueError(
            f"n_bar / IR = {spec.n_bar / spec.imbalance_ratio:.3g} rounds to an empty tail class")
    c = np.arange(spec.num_classes)
    raw = spec.n_bar / spec.imbalance_ratio ** (c / (spec.num_classes - 1))
    return np.maximum(np.floor(raw + 0.5), 1).astype(np.int64)


def subsample_long_tail(base: Dataset, spec: LongTailSpec, seed: int) -> Dataset:
    """Keep ``long_tail_counts(spec)[c]`` examples of class ``c``, uniformly without replacement."""
    if spec.num_classes != base.num_classes:
        raise ValueError(f"spec has {spec.num_classes} classes, base has {base.num_classes}")
    counts = long_tail_counts(spec)
    rng = stream_rng(seed, "subsample")
    keep = []
    for c, ix in enumerate(base.by_class):
        if len(ix) < counts[c]:
            raise ValueError(f"class {c} has {len(ix)} examples, {counts[c]} requested")
        keep.append(rng.choice(ix, size=counts[c], replace=False))
    return base.subset(np.sort(np.concatenate(keep)))


def duplicate_to_counts(ds: Dataset, target_counts, seed: int) -> Dataset:
    """Oversample by literal duplication until class ``c`` has ``target_counts[c]`` rows.

    Whole copies of the class first, then a seeded subset for the remainder.
    """
    target = np.asarray(target_counts, dtype=np.int64)
    rng = stream_rng(seed, "duplicate")
    rows = [np.arange(len(ds))]
    for c, ix in enumerate(ds.by_class):
        extra = int(target[c]) - len(ix)
        if extra < 0:
            raise ValueError(f"class {c}: target {target[c]} below current count {len(ix)}")
        if extra == 0:
            continue
        full, rest = divmod(extra, len(ix))
        rows.append(np.tile(ix, full))
        rows.append(np.sort(rng.choice(ix, size=rest, replace=False)))
    return ds.subset(np.concatenate(rows))


# --- Gaussian generators --------------------------------------------------------


def class_centers(num_classes: int, dim: int, spacing: float) -> np.ndarray:
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    centers = np.zeros((num_classes, dim))
    if dim >= num_classes:
        centers[np.arange(num_classes), np.arange(num_classes)] = spacing / math.sqrt(2.0)
    elif dim >= 2:
        radius = spacing / (2.0 * math.sin(math.pi / num_classes))
        angle = 2.0 * math.pi * np.arange(num_classes) / num_classes
        centers[:, 0] = radius * np.cos(angle)
        centers[:, 1] = radius * np.sin(angle)
    else:
        centers[:, 0] = spacing * np.arange(num_classes)
    return centers


@dataclass(frozen=True)
class GaussianFamily:
    """Generator parameters shared by a training set and its test split."""

    num_classes: int
    dim: int
    noise: tuple
    spacing: float

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        noise = tuple(float(s) for s in np.broadcast_to(self.noise, (self.num_classes,)))
        if any(s < 0 or not math.isfinite(s) for s in noise):
            raise ValueError(f"noise must be finite and >= 0, got {noise}")
        object.__setattr__(self, "noise", noise)

    def sample(self, per_class_counts, rng: np.random.Generator) -> Dataset:
        counts = np.broadcast_to(np.asarray(per_class_counts, dtype=np.int64), (self.num_classes,))
        if np.any(counts < 1):
            raise ValueError(f"per-class counts must be >= 1, got {counts}")
        centers = class_centers(self.num_classes, self.dim, self.spacing)
        xs, ys = [], []
        for c in range(self.num_classes):
            eps = rng.standard_normal((int(counts[c]), self.dim))
            xs.append(centers[c] + self.noise[c] * eps)
            ys.append(np.full(int(counts[c]), c, dtype=np.int64))
        return Dataset(np.concatenate(xs), np.concatenate(ys), self.num_classes)


def synth_gaussian_classes(num_classes: int, dim: int, per_class_counts, noise_per_class,
                           spacing: float, seed: int) -> Dataset:
    family = GaussianFamily(num_classes, dim, noise_per_class, spacing)
    return family.sample(per_class_counts, stream_rng(seed, "train"))


def balanced_test_split(family: GaussianFamily, test_per_class: int, seed: int) -> Dataset:
    """Fresh draw of ``test_per_class`` examples per class on the test stream."""
    if test_per_class < 1:
        raise ValueError("test_per_class must be >= 1")
    return family.sample(test_per_class, stream_rng(seed, "test"))


@dataclass(frozen=True)
class SemanticSpec:
    """Equal cardinalities, unequal hardness: the first ``num_hard`` classes are noisier."""

    num_easy: int
    num_hard: int
    per_class_count: int
    dim: int
    easy_noise: float
    hard_noise: float
    class_center_spacing: float

    def __post_init__(self):
        if min(self.num_easy, self.num_hard, self.per_class_count, self.dim) < 1:
            raise ValueError("all counts in a semantic spec must be positive")
        if not self.hard_noise > self.easy_noise > 0:
            raise ValueError("need hard_noise > easy_noise > 0")

    @property
    def num_classes(self) -> int:
        return self.num_easy + self.num_hard

    def hard_mask(self) -> np.ndarray:
        return np.arange(self.num_classes) < self.num_hard

    def family(self) -> GaussianFamily:
        noise = np.where(self.hard_mask(), self.hard_noise, self.easy_noise)
        return GaussianFamily(self.num_classes, self.dim, tuple(noise), self.class_center_spacing)


def semantic_dataset(spec: SemanticSpec, seed: int) -> Dataset:
    return spec.family().sample(spec.per_class_count, stream_rng(seed, "train"))


def long_tail_dataset(family: GaussianFamily, spec: LongTailSpec, seed: int) -> Dataset:
    """Balanced base of ``n_bar`` per class, then long-tail subsampling."""
    base = family.sample(spec.n_bar, stream_rng(seed, "train"))
    return subsample_long_tail(base, spec, seed)


# --- files ----------------------------------------------------------------------


def dataset_to_csv(ds: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"f{j}" for j in range(ds.dim)] + ["label"])
    for x, y in zip(ds.features, ds.labels):
        w.writerow([repr(float(v)) for v in x] + [int(y)])
    return buf.getvalue()


def dataset_to_bytes(ds: Dataset) -> bytes:
    head = BINARY_MAGIC + struct.pack("<III", len(ds), ds.dim, ds.num_classes)
    return (head + ds.features.astype("<f8").tobytes()
            + ds.labels.astype("<u4").tobytes())


def save_dataset(ds: Dataset, path) -> None:
    """CSV for ``*.csv``, the ``IMBD`` binary layout otherwise."""
    if os.fspath(path).endswith(".csv"):
        atomic_write_text(path, dataset_to_csv(ds))
    else:
        atomic_write_bytes(path, dataset_to_bytes(ds))


def _load_csv(path, num_classes: int | None) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DatasetFormatError("missing header", line=1)
        if header[-1] != "label" or header[:-1] != [f"f{j}" for j in range(len(header) - 1)]:
            raise DatasetFormatError(f"bad header {header}", line=1)
        dim = len(header) - 1
        xs, ys = [], []
        for row in reader:
            line = reader.line_num
            if len(row) != dim + 1:
                raise DatasetFormatError(f"expected {dim + 1} cells, got {len(row)}", line=line)
            try:
                xs.append([float(v) for v in row[:-1]])
                label = int(row[-1])
            except ValueError as exc:
                raise DatasetFormatError(f"non-numeric cell ({exc})", line=line) from None
            if label < 0 or (num_classes is not None and label >= num_classes):
                raise DatasetFormatError(f"label {label} outside [0, {num_classes})", line=line)
            ys.append(label)
    if not ys:
        raise DatasetFormatError("empty dataset")
    x = np.array(xs, dtype=np.float64).reshape(len(ys), dim)
    if not np.all(np.isfinite(x)):
        raise DatasetFormatError("non-finite feature value")
    y = np.array(ys, dtype=np.int64)
    return Dataset(x, y, num_classes if num_classes is not None else int(y.max()) + 1)


def _load_binary(path, num_classes: int | None) -> Dataset:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != BINARY_MAGIC:
        raise DatasetFormatError("bad magic, not an IMBD file")
    if len(data) < 16:
        raise DatasetFormatError("truncated header")
    n, d, c = struct.unpack("<III", data[4:16])
    expected = 16 + 8 * n * d + 4 * n
    if len(data) != expected:
        raise DatasetFormatError(f"size {len(data)} bytes, expected {expected}")
    if n == 0:
        raise DatasetFormatError("empty dataset")
    if num_classes is not None and num_classes != c:
        raise DatasetFormatError(f"file has {c} classes, caller expects {num_classes}")
    x = np.frombuffer(data, dtype="<f8", count=n * d, offset=16).reshape(n, d).astype(np.float64)
    y = np.frombuffer(data, dtype="<u4", count=n, offset=16 + 8 * n * d).astype(np.int64)
    if np.any(y >= c):
        raise DatasetFormatError(f"label outside [0, {c})")
    return Dataset(x, y, c)


def load_dataset(path, num_classes: int | None = None) -> Dataset:
    """Load a dataset file; CSV files take ``num_classes`` from the caller or ``max label + 1``."""
    if os.fspath(path).endswith(".csv"):
        return _load_csv(path, num_classes)
    return _load_binary(path, num_classes)


def manifest_text(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "__dataclass_fields__"):
        return asdict(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")
