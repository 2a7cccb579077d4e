"""Class-imbalance measures and the rank-correlation diagnostic."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from classunc.fileio import atomic_write_text

ORIGINS = ("cardinality", "uncertainty", "combined")


@dataclass(frozen=True)
class ImbalanceMeasure:
    origin: str
    unnormalized: np.ndarray
    normalized: np.ndarray

    def __post_init__(self):
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown measure origin {self.origin!r}")
        u = np.asarray(self.unnormalized, dtype=np.float64)
        n = np.asarray(self.normalized, dtype=np.float64)
        if u.shape != n.shape or u.ndim != 1:
            raise ValueError("unnormalized and normalized must be vectors of equal length")
        if abs(n.sum() - 1.0) > 1e-9:
            raise ValueError(f"normalized measure sums to {n.sum()!r}")
        object.__setattr__(self, "unnormalized", u)
        object.__setattr__(self, "normalized", n)

    @classmethod
    def from_unnormalized(cls, origin: str, values) -> "ImbalanceMeasure":
        v = np.asarray(values, dtype=np.float64)
        return cls(origin, v, normalize(v))

    @property
    def num_classes(self) -> int:
        return len(self.normalized)


def normalize(vec) -> np.ndarray:
    """Scale a nonnegative vector to sum 1; an all-zero vector maps to uniform."""
    v = np.asarray(vec, dtype=np.float64)
    if v.ndim != 1 or len(v) == 0:
        raise ValueError("expected a non-empty vector")
    if not np.all(np.isfinite(v)) or np.any(v < 0):
        raise ValueError(f"entries must be finite and >= 0, got {v}")
    total = v.sum()
    if total == 0:
        return np.full(len(v), 1.0 / len(v))
    return v / total


def cardinality_measure(class_counts) -> ImbalanceMeasure:
    """Inverse cardinality ``1/N_c``, normalized."""
    n = np.asarray(class_counts, dtype=np.float64)
    if n.ndim != 1 or len(n) == 0:
        raise ValueError("class_counts must be a non-empty vector")
    if np.any(n < 1):
        raise ValueError(f"empty class in counts {n}; drop it or fail")
    return ImbalanceMeasure.from_unnormalized("cardinality", 1.0 / n)


@dataclass(frozen=True)
class Rho:
    """Spearman correlation; ``value is None`` when either input is constant."""

    value: float | None

    @property
    def defined(self) -> bool:
        return self.value is not None

    def __str__(self):
        return "undefined" if self.value is None else f"{self.value:.6g}"


def spearman_rho(x, y) -> Rho:
    """Pearson correlation of average ranks."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError("spearman_rho needs two vectors of equal length")
    if len(a) < 2:
        raise ValueError("spearman_rho needs at least 2 points")
    if np.all(a == a[0]) or np.all(b == b[0]):
        return Rho(None)
    ra = rankdata(a) - (len(a) + 1) / 2.0
    rb = rankdata(b) - (len(b) + 1) / 2.0
    r = float(ra @ rb / np.sqrt((ra @ ra) * (rb @ rb)))
    return Rho(min(1.0, max(-1.0, r)))


def measure_to_csv(measure: ImbalanceMeasure) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class_index", "unnormalized", "normalized", "origin"])
    for c, (u, n) in enumerate(zip(measure.unnormalized, measure.normalized)):
        w.writerow([c, repr(float(u)), repr(float(n)), measure.origin])
    return buf.getvalue()


def save_measure(measure: ImbalanceMeasure, path) -> None:
    atomic_write_text(path, measure_to_csv(measure))


def load_measure(path) -> ImbalanceMeasure:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty measure file")
    rows.sort(key=lambda r: int(r["class_index"]))
    if [int(r["class_index"]) for r in rows] != list(range(len(rows))):
        raise ValueError(f"{path}: class indices must be 0..C-1")
    origins = {r["origin"] for r in rows}
    if len(origins) != 1:
        raise ValueError(f"{path}: mixed origins {origins}")
    return ImbalanceMeasure(
        origins.pop(),
        np.array([float(r["unnormalized"]) for r in rows]),
        np.array([float(r["normalized"]) for r in rows]),
    )
