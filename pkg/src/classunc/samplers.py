"""Class sampling probabilities for mini-batch construction and the batch drawer.

Every sampler is a vector ``alpha`` over classes; a batch is drawn by picking a
class from ``alpha`` and then an example of that class uniformly with
replacement. The naive (random) sampler is the special case
``alpha_c = N_c / N``, which makes every example equally likely.

Random streams are numpy ``Generator`` objects on the PCG64 bit generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RNG_ALGORITHM = "PCG64"
_TOL = 1e-9


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _as_probs(alpha) -> np.ndarray:
    a = np.asarray(alpha, dtype=np.float64)
    if a.ndim != 1 or len(a) == 0:
        raise ValueError("class probabilities must be a non-empty vector")
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise ValueError(f"class probabilities must be finite and >= 0, got {a}")
    total = a.sum()
    if total <= 0:
        raise ValueError("class probabilities sum to zero")
    # leave valid vectors untouched so equal schedules stay bit-identical
    if abs(total - 1.0) > 1e-12:
        a = a / total
    return a


@dataclass(frozen=True)
class ClassProbs:
    alpha: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=np.float64)
        if a.ndim != 1 or np.any(a < 0) or abs(a.sum() - 1.0) > _TOL:
            raise ValueError(f"not a probability vector: {a}")
        object.__setattr__(self, "alpha", a)

    def __len__(self):
        return len(self.alpha)


@dataclass(frozen=True)
class SamplerSchedule:
    start: ClassProbs
    end: ClassProbs
    total_epochs: int

    def __post_init__(self):
        if len(self.start) != len(self.end):
            raise ValueError("schedule endpoints differ in length")
        if self.total_epochs < 1:
            raise ValueError(f"total_epochs must be >= 1, got {self.total_epochs}")


def _counts(class_counts) -> np.ndarray:
    n = np.asarray(class_counts, dtype=np.float64)
    if n.ndim != 1 or len(n) == 0 or n.sum() <= 0:
        raise ValueError("empty dataset")
    if np.any(n < 1):
        raise ValueError(f"every class needs at least one example, got {n}")
    return n


def random_probs(class_counts) -> ClassProbs:
    """Instance-balanced sampling: ``alpha_c = N_c / N``."""
    n = _counts(class_counts)
    return ClassProbs(n / n.sum())


def cb_probs(num_classes: int) -> ClassProbs:
    """Class-balanced sampling: uniform over classes."""
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    return ClassProbs(np.full(num_classes, 1.0 / num_classes))


def pb_probs(epoch: float, schedule: SamplerSchedule) -> ClassProbs:
    """Linear interpolation from ``schedule.start`` (epoch 0) to ``schedule.end`` (last epoch)."""
    if not 0 <= epoch <= schedule.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {schedule.total_epochs}]")
    t = epoch / schedule.total_epochs
    a, b = schedule.start.alpha, schedule.end.alpha
    return ClassProbs(_as_probs(a + t * (b - a)))


def progressive_schedule(class_counts, total_epochs: int) -> SamplerSchedule:
    return SamplerSchedule(random_probs(class_counts), cb_probs(len(class_counts)), total_epochs)


def ubrs_probs(mu_u) -> ClassProbs:
    """Uncertainty-based resampling: ``alpha = mu_u``."""
    mu = np.asarray(mu_u, dtype=np.float64)
    if mu.ndim != 1 or np.any(mu < 0) or abs(mu.sum() - 1.0) > _TOL:
        raise ValueError(f"uncertainty measure must be normalized and nonnegative, got {mu}")
    return ClassProbs(mu.copy())


def pb_ubrs_probs(epoch: float, total_epochs: int, class_counts, mu_u) -> ClassProbs:
    """Progressive schedule from instance-balanced sampling to ``alpha = mu_u``."""
    schedule = SamplerSchedule(random_probs(class_counts), ubrs_probs(mu_u), total_epochs)
    return pb_probs(epoch, schedule)


def duplication_probs(lam: float, class_counts) -> ClassProbs:
    """Geometric interpolation ``uniform**lam * natural**(1 - lam)``, renormalized."""
    if not 0 <= lam <= 1:
        raise ValueError(f"duplication strength must be in [0, 1], got {lam}")
    natural = random_probs(class_counts).alpha
    if lam == 0:
        return ClassProbs(natural)
    uniform = cb_probs(len(natural)).alpha
    if lam == 1:
        return ClassProbs(uniform)
    raw = uniform**lam * natural ** (1.0 - lam)
    return ClassProbs(raw / raw.sum())


def class_index(labels, num_classes: int) -> list[np.ndarray]:
    """Example indices grouped by class."""
    y = np.asarray(labels)
    order = np.argsort(y, kind="stable")
    bounds = np.searchsorted(y[order], np.arange(num_classes + 1))
    return [order[bounds[c]:bounds[c + 1]] for c in range(num_classes)]


def draw_batch(alpha: ClassProbs, by_class: list[np.ndarray], batch_size: int,
               rng: np.random.Generator) -> np.ndarray:
    """Draw ``batch_size`` example indices: class from ``alpha``, then uniform within class.

    ``by_class`` is the output of :func:`class_index` (or a ``Dataset``'s).
    """
    a = alpha.alpha if isinstance(alpha, ClassProbs) else _as_probs(alpha)
    if len(a) != len(by_class):
        raise ValueError(f"alpha has {len(a)} classes, dataset has {len(by_class)}")
    sizes = np.array([len(ix) for ix in by_class])
    empty = (a > 0) & (sizes == 0)
    if np.any(empty):
        raise ValueError(f"classes {np.flatnonzero(empty).tolist()} have alpha > 0 but no examples")
    if batch_size < 0:
        raise ValueError("batch_size must be >= 0")
    if batch_size == 0:
        return np.empty(0, dtype=np.int64)
    cdf = np.cumsum(a)
    cdf /= cdf[-1]
    cls = np.searchsorted(cdf, rng.random(batch_size), side="right")
    cls = np.minimum(cls, len(a) - 1)
    within = np.floor(rng.random(batch_size) * sizes[cls]).astype(np.int64)
    out = np.empty(batch_size, dtype=np.int64)
    for c in np.unique(cls):
        sel = cls == c
        out[sel] = by_class[c][within[sel]]
    return out
