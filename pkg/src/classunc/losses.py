"""Classification losses with analytic logit gradients, and their per-class
weight and margin constructors (cardinality-, effective-number- and
uncertainty-derived).

Every batch loss is the mean over the batch of ``w[y] * l(s, y)`` where ``l``
is cross-entropy or focal loss computed on (optionally) margin-adjusted
logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from classunc.errors import NonFiniteError
from classunc.nn import log_softmax

VARIANTS = ("ce", "weighted_ce", "focal", "margin_ce")


@dataclass(frozen=True)
class ClassWeights:
    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 1:
            raise ValueError("class weights must be a vector")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError(f"class weights must be finite and >= 0, got {w}")
        object.__setattr__(self, "w", w)

    def __len__(self):
        return len(self.w)


@dataclass(frozen=True)
class MarginSpec:
    """Per-class margins ``deltas``; ``beta`` selects whether non-label classes
    are shifted by their own margin (1) or left untouched (0)."""

    deltas: np.ndarray
    beta: int = 0

    def __post_init__(self):
        d = np.asarray(self.deltas, dtype=np.float64)
        if d.ndim != 1 or not np.all(np.isfinite(d)):
            raise ValueError(f"margins must be a finite vector, got {d}")
        if self.beta not in (0, 1):
            raise ValueError(f"beta must be 0 or 1, got {self.beta}")
        object.__setattr__(self, "deltas", d)

    def __len__(self):
        return len(self.deltas)


@dataclass(frozen=True)
class LossSpec:
    variant: str = "ce"
    weights: ClassWeights | None = None
    margin: MarginSpec | None = None
    focal_gamma: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown loss variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant == "weighted_ce" and self.weights is None:
            raise ValueError("weighted_ce requires weights")
        if self.variant == "focal":
            if self.focal_gamma is None:
                raise ValueError("focal loss requires focal_gamma")
            if self.focal_gamma < 0:
                raise ValueError(f"focal_gamma must be >= 0, got {self.focal_gamma}")
        if self.variant == "margin_ce" and self.margin is None:
            raise ValueError("margin_ce requires a margin")


def _labels(labels, m: int, num_classes: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim == 0:
        y = y[None]
    if y.shape != (m,):
        raise ValueError(f"expected {m} labels, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(y == np.round(y)):
            raise ValueError("labels must be integers")
        y = y.astype(np.int64)
    if np.any(y < 0) or np.any(y >= num_classes):
        raise ValueError(f"label out of range [0, {num_classes})")
    return y


def adjusted_logits(logits: np.ndarray, labels: np.ndarray, margin: MarginSpec) -> np.ndarray:
    """Label class shifted by its margin; other classes by ``beta * margin``."""
    if len(margin) != logits.shape[1]:
        raise ValueError(f"margin length {len(margin)} != num classes {logits.shape[1]}")
    rows = np.arange(len(labels))
    z = logits - margin.beta * margin.deltas[None, :] if margin.beta else logits.copy()
    z[rows, labels] = logits[rows, labels] - margin.deltas[labels]
    return z


def batch_loss(logits, labels, spec: LossSpec) -> tuple[float, np.ndarray]:
    """Mean loss over the batch and its gradient wrt the raw logits."""
    s = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    if not np.all(np.isfinite(s)):
        raise NonFiniteError("non-finite logits")
    m, num_classes = s.shape
    y = _labels(labels, m, num_classes)
    rows = np.arange(m)

    z = adjusted_logits(s, y, spec.margin) if spec.margin is not None else s
    logp = log_softmax(z)
    p = np.exp(logp)
    logp_y = logp[rows, y]
    onehot = np.zeros_like(p)
    onehot[rows, y] = 1.0

    if spec.variant == "focal" and spec.focal_gamma:
        gamma = float(spec.focal_gamma)
        p_y = np.exp(logp_y)
        q = -np.expm1(logp_y)  # 1 - p_y without cancellation
        per = q**gamma * -logp_y
        # d/dp of -(1-p)^g log p, times dp/ds = p (onehot - p)
        safe_q = np.where(q > 0, q, 1.0)
        t1 = np.where(q > 0, gamma * safe_q ** (gamma - 1.0) * p_y * logp_y, 0.0)
        coef = t1 - q**gamma
        grad = coef[:, None] * (onehot - p)
    else:
        per = -logp_y
        grad = p - onehot

    if spec.weights is not None:
        if len(spec.weights) != num_classes:
            raise ValueError(f"weights length {len(spec.weights)} != num classes {num_classes}")
        wy = spec.weights.w[y]
        per = wy * per
        grad = wy[:, None] * grad

    return float(per.mean()), grad / m


def _single(logits, label, spec):
    s = np.asarray(logits, dtype=np.float64)
    loss, grad = batch_loss(s[None, :], [label], spec)
    return loss, grad[0]


def ce_loss(logits, label: int):
    """``-log softmax(logits)[label]`` and ``softmax - onehot``."""
    return _single(logits, label, LossSpec("ce"))


def weighted_ce_loss(logits, label: int, weights: ClassWeights):
    return _single(logits, label, LossSpec("weighted_ce", weights=weights))


def focal_loss(logits, label: int, gamma: float, weights: ClassWeights | None = None):
    return _single(logits, label, LossSpec("focal", weights=weights, focal_gamma=gamma))


def margin_ce_loss(logits, label: int, margin: MarginSpec, weights: ClassWeights | None = None):
    return _single(logits, label, LossSpec("margin_ce", weights=weights, margin=margin))


def margin_softmax(logits, label: int, margin: MarginSpec) -> np.ndarray:
    """Class probabilities under the margin-adjusted softmax for an example with ``label``."""
    s = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise NonFiniteError("non-finite logits")
    y = _labels([label], 1, s.shape[-1])
    z = adjusted_logits(s[None, :], y, margin)
    return np.exp(log_softmax(z))[0]


# --- weight constructors -------------------------------------------------------


def _counts(class_counts) -> np.ndarray:
    n = np.asarray(class_counts, dtype=np.float64)
    if n.ndim != 1 or len(n) == 0:
        raise ValueError("class_counts must be a non-empty vector")
    if np.any(n < 1):
        raise ValueError(f"every class needs at least one example, got counts {n}")
    return n


def _rescale_to_num_classes(x: np.ndarray) -> ClassWeights:
    # equal raw weights are exactly ones, so balanced data reduces to plain CE bit for bit
    if np.all(x == x[0]):
        return ClassWeights(np.ones_like(x))
    return ClassWeights(x * (len(x) / x.sum()))


def csce_weights(class_counts) -> ClassWeights:
    """Inverse-cardinality weights, summing to the number of classes."""
    return _rescale_to_num_classes(1.0 / _counts(class_counts))


def class_balanced_weights(class_counts, beta_eff: float = 0.9999) -> ClassWeights:
    """Inverse effective-number weights ``(1 - b) / (1 - b**N_c)``, summing to |C|."""
    if not 0 <= beta_eff < 1:
        raise ValueError(f"beta_eff must be in [0, 1), got {beta_eff}")
    n = _counts(class_counts)
    if beta_eff == 0:
        return ClassWeights(np.ones_like(n))
    raw = (1.0 - beta_eff) / -np.expm1(n * np.log(beta_eff))
    return _rescale_to_num_classes(raw)


def ubrw_weights(mu_u) -> ClassWeights:
    """Uncertainty-based reweighting: ``w_c = mu_c * |C|``."""
    mu = np.asarray(mu_u, dtype=np.float64)
    if mu.ndim != 1 or np.any(mu < 0) or not np.all(np.isfinite(mu)):
        raise ValueError(f"uncertainty measure must be a nonnegative vector, got {mu}")
    if abs(mu.sum() - 1.0) > 1e-9:
        raise ValueError(f"uncertainty measure must be normalized, sums to {mu.sum()!r}")
    return ClassWeights(mu * len(mu))


def combined_weights(w_u: ClassWeights, w_c: ClassWeights, mix: float) -> ClassWeights:
    """Convex combination ``mix * w_u + (1 - mix) * w_c``."""
    if not 0 <= mix <= 1:
        raise ValueError(f"mix must be in [0, 1], got {mix}")
    if len(w_u) != len(w_c):
        raise ValueError("weight vectors differ in length")
    if mix == 0:
        return ClassWeights(w_c.w.copy())
    if mix == 1:
        return ClassWeights(w_u.w.copy())
    return ClassWeights(mix * w_u.w + (1.0 - mix) * w_c.w)


# --- margin constructors -------------------------------------------------------


def ldam_margins(class_counts, tau: float = 0.5) -> MarginSpec:
    """``tau / N_c**0.25`` on the label logit only (beta = 0)."""
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    return MarginSpec(tau / _counts(class_counts) ** 0.25, beta=0)


def logit_adjusted_margins(class_counts, kappa: float = 1.0) -> MarginSpec:
    """``-kappa * log(prior_c)`` on every logit (beta = 1)."""
    n = _counts(class_counts)
    return MarginSpec(-kappa * np.log(n / n.sum()), beta=1)


def ubm_margins(mu_u_unnormalized, tau: float = 0.5) -> MarginSpec:
    """Uncertainty-based margins ``tau * mu_c / max(mu)`` (beta = 0)."""
    mu = np.asarray(mu_u_unnormalized, dtype=np.float64)
    if mu.ndim != 1 or np.any(mu < 0) or not np.all(np.isfinite(mu)):
        raise ValueError(f"unnormalized uncertainty must be a nonnegative vector, got {mu}")
    top = mu.max()
    if top <= 0:
        raise ValueError("all-zero uncertainty vector has no margins")
    return MarginSpec(tau * (mu / top), beta=0)
