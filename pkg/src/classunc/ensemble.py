"""Deep ensembles and the uncertainty quantities derived from them.

Entropies use the natural log, so a uniform prediction over ``C`` classes has
entropy ``ln C``.
"""

from __future__ import annotations

import csv
import io
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import entr

from classunc.datasets import Dataset
from classunc.errors import EnsembleMemberError
from classunc.fileio import atomic_write_bytes, atomic_write_text
from classunc.measures import ImbalanceMeasure, normalize
from classunc.nn import MlpModel, forward, softmax
from classunc.trainer import MitigationSpec, TrainConfig, train

BINARY_MAGIC = b"ENSP"


@dataclass(frozen=True)
class EnsemblePredictions:
    """Member probabilities, shape ``(T, N, C)``."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64)
        if p.ndim != 3 or p.shape[0] < 1:
            raise ValueError(f"expected a (T, N, C) array with T >= 1, got shape {p.shape}")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and >= 0")
        if np.any(np.abs(p.sum(axis=2) - 1.0) > 1e-9):
            raise ValueError("every member prediction must sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def t_members(self) -> int:
        return self.probs.shape[0]


@dataclass(frozen=True)
class UncertaintyReport:
    per_example_u: np.ndarray
    class_unnormalized: np.ndarray
    class_normalized: np.ndarray
    epistemic_mi: np.ndarray | None = None
    aleatoric_ee: np.ndarray | None = None

    def measure(self) -> ImbalanceMeasure:
        return ImbalanceMeasure("uncertainty", self.class_unnormalized, self.class_normalized)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class_index", "mu_tilde", "mu"])
        for c, (u, n) in enumerate(zip(self.class_unnormalized, self.class_normalized)):
            w.writerow([c, repr(float(u)), repr(float(n))])
        return buf.getvalue()


def _members(ens) -> np.ndarray:
    p = ens.probs if isinstance(ens, EnsemblePredictions) else np.asarray(ens, dtype=np.float64)
    if p.ndim != 3 or p.shape[0] == 0:
        raise ValueError("empty ensemble")
    return p


def _check_rows(p: np.ndarray) -> np.ndarray:
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=-1) - 1.0) > 1e-9):
        raise ValueError("invalid probability row")
    return p


def mean_prediction(ens) -> np.ndarray:
    return _members(ens).mean(axis=0)


def entropy(probs) -> np.ndarray:
    """Natural-log Shannon entropy of the last axis; ``0 log 0 = 0``."""
    p = _check_rows(np.asarray(probs, dtype=np.float64))
    return entr(p).sum(axis=-1)


def predictive_entropy(mean_probs):
    """Entropy of the ensemble-mean prediction (a row or a matrix of rows)."""
    h = entropy(mean_probs)
    return float(h) if np.ndim(h) == 0 else h


def aleatoric_ee(ens) -> np.ndarray:
    """Expected member entropy."""
    return entropy(_members(ens)).mean(axis=0)


def epistemic_mi(ens) -> np.ndarray:
    """Mutual information: mixture entropy minus expected member entropy, clamped at 0."""
    p = _members(ens)
    mi = entropy(p.mean(axis=0)) - entropy(p).mean(axis=0)
    return np.maximum(mi, 0.0)


def class_uncertainty(per_example_u, labels, class_counts) -> tuple[np.ndarray, np.ndarray]:
    """Class-wise mean uncertainty and its normalization (uniform if all zero)."""
    u = np.asarray(per_example_u, dtype=np.float64)
    y = np.asarray(labels)
    counts = np.asarray(class_counts)
    if u.shape != y.shape:
        raise ValueError("per-example uncertainties and labels differ in length")
    if np.any(counts < 1):
        raise ValueError(f"classes {np.flatnonzero(counts < 1).tolist()} have no examples")
    if np.any(y < 0) or np.any(y >= len(counts)):
        raise ValueError("label outside the class range")
    if not np.array_equal(np.bincount(y, minlength=len(counts)), counts):
        raise ValueError("class_counts do not match the labels")
    tilde = np.bincount(y, weights=u, minlength=len(counts)) / counts
    return tilde, normalize(tilde)


def uncertainty_report(ens, labels, num_classes: int) -> UncertaintyReport:
    p = _members(ens)
    u = predictive_entropy(p.mean(axis=0))
    y = np.asarray(labels)
    tilde, mu = class_uncertainty(u, y, np.bincount(y, minlength=num_classes))
    return UncertaintyReport(u, tilde, mu, epistemic_mi(p), aleatoric_ee(p))


# --- training -------------------------------------------------------------------


def _train_member(args):
    dataset, config, epochs, seed = args
    model, _, _ = train(dataset, config, MitigationSpec.naive(epochs), seed)
    return model


def train_ensemble(dataset: Dataset, config: TrainConfig, epochs: int, t_members: int = 5,
                   base_seed: int = 0, jobs: int = 1) -> list[MlpModel]:
    """``t_members`` naive classifiers with seeds ``base_seed .. base_seed + T - 1``.

    Member seeds drive both initialization and batch order. Results do not
    depend on ``jobs``.
    """
    if t_members < 1:
        raise ValueError(f"t_members must be >= 1, got {t_members}")
    tasks = [(dataset, config, epochs, base_seed + t) for t in range(t_members)]
    if jobs > 1 and t_members > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, t_members)) as pool:
            return list(pool.map(_train_member, tasks))
    models = []
    for t, task in enumerate(tasks):
        try:
            models.append(_train_member(task))
        except Exception as exc:
            raise EnsembleMemberError(t, exc) from exc
    return models


def predict(models: list[MlpModel], features) -> EnsemblePredictions:
    """Inference-mode member probabilities on ``features``."""
    if not models:
        raise ValueError("empty ensemble")
    return EnsemblePredictions(np.stack([softmax(forward(m, features)) for m in models]))


def class_uncertainty_measure(dataset: Dataset, config: TrainConfig, epochs: int,
                              t_members: int = 5, base_seed: int = 0, jobs: int = 1):
    """Train an ensemble on ``dataset`` and measure uncertainty on the same training examples.

    Returns ``(ImbalanceMeasure, UncertaintyReport, EnsemblePredictions)``.
    """
    models = train_ensemble(dataset, config, epochs, t_members, base_seed, jobs)
    ens = predict(models, dataset.features)
    report = uncertainty_report(ens, dataset.labels, dataset.num_classes)
    return report.measure(), report, ens


# --- files ----------------------------------------------------------------------


def predictions_to_bytes(ens: EnsemblePredictions) -> bytes:
    t, n, c = ens.probs.shape
    return BINARY_MAGIC + struct.pack("<III", t, n, c) + ens.probs.astype("<f8").tobytes()


def predictions_from_bytes(data: bytes) -> EnsemblePredictions:
    if data[:4] != BINARY_MAGIC or len(data) < 16:
        raise ValueError("not an ENSP file")
    t, n, c = struct.unpack("<III", data[4:16])
    if len(data) != 16 + 8 * t * n * c:
        raise ValueError("ENSP payload size does not match its header")
    return EnsemblePredictions(np.frombuffer(data, dtype="<f8", offset=16).reshape(t, n, c))


def predictions_to_csv(ens: EnsemblePredictions) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["member", "example_index", "class_index", "prob"])
    t, n, c = ens.probs.shape
    for (m, i, k), v in np.ndenumerate(ens.probs):
        w.writerow([m, i, k, repr(float(v))])
    return buf.getvalue()


def predictions_from_csv(text: str) -> EnsemblePredictions:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty prediction dump")
    idx = np.array([[int(r["member"]), int(r["example_index"]), int(r["class_index"])] for r in rows])
    shape = tuple(idx.max(axis=0) + 1)
    probs = np.full(shape, np.nan)
    probs[idx[:, 0], idx[:, 1], idx[:, 2]] = [float(r["prob"]) for r in rows]
    if np.isnan(probs).any():
        raise ValueError("prediction dump is missing entries")
    return EnsemblePredictions(probs)


def save_predictions(ens: EnsemblePredictions, path) -> None:
    """CSV for ``*.csv``, the ``ENSP`` binary layout otherwise."""
    if str(path).endswith(".csv"):
        atomic_write_text(path, predictions_to_csv(ens))
    else:
        atomic_write_bytes(path, predictions_to_bytes(ens))


def load_predictions(path) -> EnsemblePredictions:
    if str(path).endswith(".csv"):
        with open(path) as fh:
            return predictions_from_csv(fh.read())
    with open(path, "rb") as fh:
        return predictions_from_bytes(fh.read())
