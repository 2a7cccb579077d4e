"""Training orchestration: mitigation specs, one- and multi-stage runs, evaluation."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from classunc import losses, samplers
from classunc.datasets import Dataset
from classunc.errors import ConfigError, MeasureRequiredError, NonFiniteError
from classunc.fileio import config_hash
from classunc.measures import ImbalanceMeasure
from classunc.nn import MlpModel, SgdState, backward_and_step, forward, init_model

SAMPLERS = ("random", "cb", "pb", "ubrs", "pb_ubrs", "duplication")
LOSSES = ("ce", "focal")
WEIGHT_SOURCES = ("none", "csce", "effective_number", "ubrw", "combined")
MARGIN_SOURCES = ("none", "ldam", "logit_adjusted", "ubm")

# per-run stream codes, mixed with the run seed
_INIT_STREAM = 10
_BATCH_STREAM = 11


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple = (32,)
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_size: int = 128
    lr_milestones: tuple = ()
    lr_factor: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "lr_milestones", tuple(int(e) for e in self.lr_milestones))
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")

    def dims(self, input_dim: int, num_classes: int) -> list[int]:
        return [input_dim, *self.hidden, num_classes]

    def lr_at(self, epoch: int) -> float:
        drops = sum(1 for m in self.lr_milestones if epoch >= m)
        return self.learning_rate * self.lr_factor**drops


@dataclass(frozen=True)
class StageSpec:
    """Sampler, loss and weight/margin sources for one training stage."""

    epochs: int
    sampler: str = "random"
    dup_lambda: float = 0.0
    loss: str = "ce"
    focal_gamma: float = 2.0
    weights: str = "none"
    mix: float = 0.5
    beta_eff: float = 0.9999
    margin: str = "none"
    tau: float = 0.5
    kappa: float = 1.0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        for value, allowed, what in ((self.sampler, SAMPLERS, "sampler"),
                                     (self.loss, LOSSES, "loss"),
                                     (self.weights, WEIGHT_SOURCES, "weights"),
                                     (self.margin, MARGIN_SOURCES, "margin")):
            if value not in allowed:
                raise ConfigError(f"unknown {what} {value!r}; expected one of {allowed}")
        if not 0 <= self.dup_lambda <= 1:
            raise ConfigError(f"dup_lambda must be in [0, 1], got {self.dup_lambda}")
        if not 0 <= self.mix <= 1:
            raise ConfigError(f"mix must be in [0, 1], got {self.mix}")

    @property
    def needs_uncertainty(self) -> bool:
        return (self.sampler in ("ubrs", "pb_ubrs") or self.weights in ("ubrw", "combined")
                or self.margin == "ubm")

    @property
    def is_naive(self) -> bool:
        return (self.sampler == "random" and self.loss == "ce" and self.weights == "none"
                and self.margin == "none")


@dataclass(frozen=True)
class MitigationSpec:
    stages: tuple

    def __post_init__(self):
        stages = tuple(s if isinstance(s, StageSpec) else StageSpec(**s) for s in self.stages)
        if not stages:
            raise ConfigError("a mitigation needs at least one stage")
        object.__setattr__(self, "stages", stages)

    @classmethod
    def naive(cls, epochs: int) -> "MitigationSpec":
        return cls((StageSpec(epochs),))

    @classmethod
    def single(cls, epochs: int, **stage) -> "MitigationSpec":
        return cls((StageSpec(epochs, **stage),))

    @classmethod
    def two_stage(cls, stage1_epochs: int, stage2_epochs: int, **stage2) -> "MitigationSpec":
        return cls((StageSpec(stage1_epochs), StageSpec(stage2_epochs, **stage2)))

    @property
    def needs_uncertainty(self) -> bool:
        return any(s.needs_uncertainty for s in self.stages)

    @property
    def total_epochs(self) -> int:
        return sum(s.epochs for s in self.stages)

    def to_dict(self) -> dict:
        return {"stages": [asdict(s) for s in self.stages]}


@dataclass
class RunResult:
    top1_error: float
    per_class_error: list
    seed: int
    epochs_run: int
    loss_curve: list = field(default_factory=list)
    mitigation_paths: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def to_report_text(result: RunResult, cfg_hash: str) -> str:
    payload = {"config_hash": cfg_hash, **result.to_dict()}
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


# --- resolving a stage ----------------------------------------------------------


def _require_measure(stage: StageSpec, measure: ImbalanceMeasure | None, num_classes: int):
    if not stage.needs_uncertainty:
        return
    if measure is None:
        raise MeasureRequiredError("measure required: stage uses uncertainty-based mitigation")
    if measure.origin != "uncertainty":
        raise MeasureRequiredError(f"measure required with origin 'uncertainty', got {measure.origin!r}")
    if measure.num_classes != num_classes:
        raise MeasureRequiredError(
            f"measure has {measure.num_classes} classes, dataset has {num_classes}")


def stage_loss_spec(stage: StageSpec, class_counts, measure: ImbalanceMeasure | None = None):
    """The ``LossSpec`` a stage trains with."""
    _require_measure(stage, measure, len(class_counts))
    weights = None
    if stage.weights == "csce":
        weights = losses.csce_weights(class_counts)
    elif stage.weights == "effective_number":
        weights = losses.class_balanced_weights(class_counts, stage.beta_eff)
    elif stage.weights == "ubrw":
        weights = losses.ubrw_weights(measure.normalized)
    elif stage.weights == "combined":
        weights = losses.combined_weights(losses.ubrw_weights(measure.normalized),
                                          losses.class_balanced_weights(class_counts, stage.beta_eff),
                                          stage.mix)
    margin = None
    if stage.margin == "ldam":
        margin = losses.ldam_margins(class_counts, stage.tau)
    elif stage.margin == "logit_adjusted":
        margin = losses.logit_adjusted_margins(class_counts, stage.kappa)
    elif stage.margin == "ubm":
        margin = losses.ubm_margins(measure.unnormalized, stage.tau)

    if stage.loss == "focal":
        return losses.LossSpec("focal", weights=weights, margin=margin, focal_gamma=stage.focal_gamma)
    if margin is not None:
        return losses.LossSpec("margin_ce", weights=weights, margin=margin)
    if weights is not None:
        return losses.LossSpec("weighted_ce", weights=weights)
    return losses.LossSpec("ce")


def stage_alpha(stage: StageSpec, epoch: int, class_counts,
                measure: ImbalanceMeasure | None = None) -> samplers.ClassProbs:
    """Class sampling probabilities at ``epoch`` (0-based, within the stage)."""
    _require_measure(stage, measure, len(class_counts))
    total = max(stage.epochs, 1)
    if stage.sampler == "random":
        return samplers.random_probs(class_counts)
    if stage.sampler == "cb":
        return samplers.cb_probs(len(class_counts))
    if stage.sampler == "pb":
        return samplers.pb_probs(epoch, samplers.progressive_schedule(class_counts, total))
    if stage.sampler == "ubrs":
        return samplers.ubrs_probs(measure.normalized)
    if stage.sampler == "pb_ubrs":
        return samplers.pb_ubrs_probs(epoch, total, class_counts, measure.normalized)
    return samplers.duplication_probs(stage.dup_lambda, class_counts)


def mitigation_paths(stage: StageSpec) -> list[str]:
    """Non-baseline code paths a stage touches; empty for the naive classifier."""
    paths = []
    if stage.sampler != "random":
        paths.append(f"sampler:{stage.sampler}")
    if stage.loss != "ce":
        paths.append(f"loss:{stage.loss}")
    if stage.weights != "none":
        paths.append(f"weights:{stage.weights}")
    if stage.margin != "none":
        paths.append(f"margin:{stage.margin}")
    return paths


# --- training -------------------------------------------------------------------


def _seeded(seed: int, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), stream])


def new_model(dataset: Dataset, config: TrainConfig, seed: int) -> MlpModel:
    init_seed = _seeded(seed, _INIT_STREAM).generate_state(1)[0]
    return init_model(config.dims(dataset.dim, dataset.num_classes), int(init_seed))


def train_one_stage(dataset: Dataset, config: TrainConfig, stage: StageSpec, seed: int,
                    model: MlpModel | None = None, measure: ImbalanceMeasure | None = None,
                    rng: np.random.Generator | None = None, epoch_offset: int = 0,
                    on_step=None):
    """Run ``stage.epochs`` epochs of momentum SGD and return ``(model, per-epoch losses)``.

    Each epoch draws ``ceil(N / batch_size)`` batches from the stage's class
    probabilities (refreshed every epoch for progressive samplers). A fresh
    optimizer is created, so velocity never carries over between stages.
    ``on_step(loss_spec, batch_indices)`` is an optional instrumentation hook.
    """
    if model is None:
        model = new_model(dataset, config, seed)
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(_seeded(seed, _BATCH_STREAM)))
    counts = dataset.class_counts
    loss_spec = stage_loss_spec(stage, counts, measure)
    state = SgdState.for_model(model, config.learning_rate, config.momentum, config.weight_decay)
    n_batches = math.ceil(len(dataset) / config.batch_size)
    curve = []
    for epoch in range(stage.epochs):
        state.learning_rate = config.lr_at(epoch_offset + epoch)
        alpha = stage_alpha(stage, epoch, counts, measure)
        total = 0.0
        for b in range(n_batches):
            ix = samplers.draw_batch(alpha, dataset.by_class, config.batch_size, rng)
            if on_step is not None:
                on_step(loss_spec, ix)
            try:
                _, loss = backward_and_step(model, state, dataset.features[ix],
                                            dataset.labels[ix], loss_spec)
            except NonFiniteError as exc:
                raise NonFiniteError(f"epoch {epoch_offset + epoch}, batch {b}: {exc}") from exc
            if not math.isfinite(loss):
                raise NonFiniteError(f"non-finite loss at epoch {epoch_offset + epoch}, batch {b}")
            total += loss
        curve.append(total / n_batches)
    return model, curve


def train(dataset: Dataset, config: TrainConfig, mitigation: MitigationSpec, seed: int,
          measure: ImbalanceMeasure | None = None, on_step=None):
    """Run every stage in order, continuing from the previous stage's parameters.

    Returns ``(model, loss_curve, mitigation_paths)``.
    """
    for stage in mitigation.stages:
        _require_measure(stage, measure, dataset.num_classes)
    model = new_model(dataset, config, seed)
    rng = np.random.Generator(np.random.PCG64(_seeded(seed, _BATCH_STREAM)))
    curve, paths, offset = [], [], 0
    for stage in mitigation.stages:
        model, stage_curve = train_one_stage(dataset, config, stage, seed, model=model,
                                             measure=measure, rng=rng, epoch_offset=offset,
                                             on_step=on_step)
        curve.extend(stage_curve)
        if stage.epochs:
            paths.extend(p for p in mitigation_paths(stage) if p not in paths)
        offset += stage.epochs
    return model, curve, paths


def train_two_stage(dataset: Dataset, config: TrainConfig, stage1_epochs: int,
                    stage2_epochs: int, stage2: StageSpec, seed: int,
                    measure: ImbalanceMeasure | None = None, on_step=None):
    """Naive training, then ``stage2`` from the stage-1 parameters with a fresh optimizer."""
    spec = MitigationSpec((StageSpec(stage1_epochs), replace(stage2, epochs=stage2_epochs)))
    return train(dataset, config, spec, seed, measure=measure, on_step=on_step)


def evaluate(model: MlpModel, test: Dataset) -> tuple[float, np.ndarray]:
    """Top-1 error and per-class errors in percent, from argmax of the raw logits."""
    counts = test.class_counts
    if np.any(counts == 0):
        raise ValueError(f"classes {np.flatnonzero(counts == 0).tolist()} absent from test set")
    pred = np.argmax(forward(model, test.features), axis=1)
    wrong = pred != test.labels
    per_class = 100.0 * np.bincount(test.labels, weights=wrong, minlength=test.num_classes) / counts
    top1 = 100.0 * wrong.mean()
    return float(top1), per_class


def run(train_set: Dataset, test_set: Dataset, config: TrainConfig, mitigation: MitigationSpec,
        seed: int, measure: ImbalanceMeasure | None = None) -> RunResult:
    model, curve, paths = train(train_set, config, mitigation, seed, measure=measure)
    top1, per_class = evaluate(model, test_set)
    return RunResult(top1, [float(e) for e in per_class], int(seed), mitigation.total_epochs,
                     [float(v) for v in curve], paths)


def run_hash(config: TrainConfig, mitigation: MitigationSpec) -> str:
    return config_hash({"train": asdict(config), "mitigation": mitigation.to_dict()})
