"""Dense ReLU classifier with hand-written backprop and heavy-ball SGD.

Matrices are plain float64 ``np.ndarray`` objects; a batch is ``(rows, dim)``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from classunc.errors import NonFiniteError

CHECKPOINT_VERSION = 1


@dataclass
class MlpModel:
    dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"

    @property
    def num_classes(self) -> int:
        return self.dims[-1]

    def copy(self) -> "MlpModel":
        return MlpModel(
            list(self.dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out


@dataclass
class SgdState:
    learning_rate: float
    momentum: float = 0.9
    weight_decay: float = 0.0
    velocities: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")

    @classmethod
    def for_model(cls, model: MlpModel, learning_rate: float, momentum: float = 0.9,
                  weight_decay: float = 0.0) -> "SgdState":
        vel = [np.zeros_like(p) for p in model.parameters()]
        return cls(learning_rate, momentum, weight_decay, vel)

    def reset(self) -> None:
        for v in self.velocities:
            v.fill(0.0)


def init_model(dims, seed: int) -> MlpModel:
    """He-normal weights (variance 2/fan_in), zero biases."""
    dims = [int(d) for d in dims]
    if len(dims) < 2:
        raise ValueError(f"need at least input and output dims, got {dims}")
    if any(d < 1 for d in dims):
        raise ValueError(f"all layer sizes must be positive, got {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(dims, weights, biases)


def _check_batch(model: MlpModel, batch) -> np.ndarray:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.dims[0]:
        raise ValueError(f"batch shape {x.shape} incompatible with input dim {model.dims[0]}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("batch contains non-finite values")
    return x


def _forward_cache(model: MlpModel, x: np.ndarray):
    acts = [x]
    pre = []
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts, pre


def forward(model: MlpModel, batch) -> np.ndarray:
    """Logits of shape ``(rows, num_classes)``."""
    x = _check_batch(model, batch)
    acts, _ = _forward_cache(model, x)
    return acts[-1]


def softmax(logits) -> np.ndarray:
    """Row-wise softmax with max subtraction; accepts a vector or a matrix."""
    s = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise NonFiniteError("softmax of non-finite logits")
    z = s - s.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    s = np.asarray(logits, dtype=np.float64)
    z = s - s.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def gradients(model: MlpModel, batch, labels, loss_spec) -> tuple[float, list[np.ndarray]]:
    """Mean batch loss and its gradient wrt every parameter (weights/biases interleaved)."""
    from classunc.losses import batch_loss

    x = _check_batch(model, batch)
    acts, pre = _forward_cache(model, x)
    loss, g = batch_loss(acts[-1], labels, loss_spec)
    grads: list[np.ndarray] = [None] * (2 * len(model.weights))  # type: ignore[list-item]
    for i in range(len(model.weights) - 1, -1, -1):
        grads[2 * i] = acts[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        if i > 0:
            g = (g @ model.weights[i].T) * (pre[i - 1] > 0)
    for i in range(len(model.weights)):
        if not (np.all(np.isfinite(grads[2 * i])) and np.all(np.isfinite(grads[2 * i + 1]))):
            raise NonFiniteError(f"non-finite gradient in layer {i}")
    return loss, grads


def backward_and_step(model: MlpModel, state: SgdState, batch, labels, loss_spec):
    """One momentum-SGD step, in place. Returns ``(model, pre-step mean loss)``.

    ``v <- momentum * v - lr * g``; ``theta <- theta + v``.
    """
    loss, grads = gradients(model, batch, labels, loss_spec)
    params = model.parameters()
    if not state.velocities:
        state.velocities = [np.zeros_like(p) for p in params]
    for p, g, v in zip(params, grads, state.velocities):
        if state.weight_decay:
            g = g + state.weight_decay * p
        v *= state.momentum
        v -= state.learning_rate * g
        p += v
    return model, loss


def save_model(model: MlpModel, path) -> None:
    arrays = {"format_version": np.array(CHECKPOINT_VERSION),
              "dims": np.asarray(model.dims, dtype=np.int64),
              "activation": np.array(model.activation)}
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    os.replace(tmp, path)


def load_model(path) -> MlpModel:
    with np.load(os.fspath(path), allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        dims = [int(d) for d in data["dims"]]
        n = len(dims) - 1
        weights = [data[f"w{i}"].astype(np.float64) for i in range(n)]
        biases = [data[f"b{i}"].astype(np.float64) for i in range(n)]
        activation = str(data["activation"])
    return MlpModel(dims, weights, biases, activation)
