"""YAML experiment configs: schema validation and object builders.

Every section is validated up front, before any training starts. Unknown keys
are errors. See ``configs/`` in the repository for complete examples.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import yaml

from classunc.analysis import (GROUPS, KINDS, FixedData, LongTailData, SemanticData, Setup,
                               default_methods)
from classunc.datasets import GaussianFamily, LongTailSpec, SemanticSpec, load_dataset
from classunc.errors import ConfigError
from classunc.trainer import MitigationSpec, StageSpec, TrainConfig

DATASET_KINDS = ("long_tail", "semantic", "balanced", "files")

_SCHEMA = {
    "seeds": None,
    "output": None,
    "dataset": {"kind", "num_classes", "dim", "noise", "spacing", "n_bar", "imbalance_ratio",
                "num_easy", "num_hard", "per_class_count", "easy_noise", "hard_noise",
                "test_per_class", "format", "train", "test"},
    "model": {"hidden"},
    "optim": {"learning_rate", "momentum", "weight_decay", "batch_size", "epochs",
              "lr_milestones", "lr_factor"},
    "mitigation": {"stages", "measure"},
    "ensemble": {"t_members", "base_seed", "epochs", "dump_format"},
    "analysis": {"kind", "ir_list", "lambda_list", "methods", "stage1_epochs"},
}


@dataclass
class ExperimentConfig:
    raw: dict
    seeds: list
    output: str | None
    dataset: dict
    train: TrainConfig
    epochs: int
    mitigation: MitigationSpec | None = None
    measure_path: str | None = None
    t_members: int = 5
    ensemble_base_seed: int | None = None
    ensemble_epochs: int | None = None
    dump_format: str = "binary"
    analysis: dict = field(default_factory=dict)
    base_dir: str = "."

    # --- dataset builders ---------------------------------------------------

    def family(self) -> GaussianFamily:
        d = self.dataset
        if d["kind"] == "semantic":
            return self.semantic_spec().family()
        return GaussianFamily(int(d.get("num_classes", 10)), int(d.get("dim", 10)),
                              d.get("noise", 0.5), float(d.get("spacing", 2.0)))

    def long_tail_spec(self) -> LongTailSpec:
        d = self.dataset
        ir = float(d.get("imbalance_ratio", 1.0)) if d["kind"] == "long_tail" else 1.0
        return LongTailSpec(int(d.get("n_bar", 500)), ir, int(d.get("num_classes", 10)))

    def semantic_spec(self) -> SemanticSpec:
        d = self.dataset
        return SemanticSpec(int(d.get("num_easy", 5)), int(d.get("num_hard", 5)),
                            int(d.get("per_class_count", 100)), int(d.get("dim", 10)),
                            float(d.get("easy_noise", 0.2)), float(d.get("hard_noise", 0.8)),
                            float(d.get("spacing", 2.5)))

    def data(self):
        """An object with ``train(seed)`` / ``test(seed)`` for the configured dataset."""
        d = self.dataset
        test_per_class = int(d.get("test_per_class", 100))
        if d["kind"] == "semantic":
            return SemanticData(self.semantic_spec(), test_per_class)
        if d["kind"] == "files":
            n = d.get("num_classes")
            train = load_dataset(self.resolve(d["train"]), n)
            test = load_dataset(self.resolve(d["test"]), train.num_classes)
            return FixedData(train, test, label=os.path.basename(d["train"]))
        return LongTailData(self.family(), self.long_tail_spec(), test_per_class)

    def measure_file(self, seed: int) -> str | None:
        """``mitigation.measure`` for ``seed``; the path may contain a ``{seed}`` field."""
        if self.measure_path is None:
            return None
        return self.resolve(self.measure_path.format(seed=seed))

    def resolve(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    def setup(self, jobs: int = 1) -> Setup:
        return Setup(self.train, self.ensemble_epochs or self.epochs, self.t_members, jobs)


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _check_keys(raw: dict):
    _require(isinstance(raw, dict), "config must be a mapping of sections")
    for key, value in raw.items():
        _require(key in _SCHEMA, f"unknown section {key!r}; expected one of {sorted(_SCHEMA)}")
        allowed = _SCHEMA[key]
        if allowed is None:
            continue
        _require(isinstance(value, dict), f"section {key!r} must be a mapping")
        extra = set(value) - allowed
        _require(not extra, f"unknown keys in {key!r}: {sorted(extra)}")


def _stage(raw, where: str) -> StageSpec:
    _require(isinstance(raw, dict), f"{where}: stage must be a mapping")
    try:
        return StageSpec(**raw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _mitigation(raw, where: str, default_epochs: int) -> MitigationSpec:
    stages = raw.get("stages")
    if stages is None:
        return MitigationSpec.naive(default_epochs)
    _require(isinstance(stages, list) and stages, f"{where}.stages must be a non-empty list")
    return MitigationSpec(tuple(_stage(s, f"{where}.stages[{i}]") for i, s in enumerate(stages)))


def parse_config(raw: dict, base_dir: str = ".") -> ExperimentConfig:
    _check_keys(raw)
    seeds = raw.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = [seeds]
    _require(isinstance(seeds, list) and seeds and all(isinstance(s, int) and s >= 0 for s in seeds),
             "seeds must be a non-empty list of nonnegative integers")

    dataset = dict(raw.get("dataset", {}))
    dataset.setdefault("kind", "long_tail")
    _require(dataset["kind"] in DATASET_KINDS,
             f"dataset.kind must be one of {DATASET_KINDS}, got {dataset['kind']!r}")
    _require(dataset.get("format", "csv") in ("csv", "binary"), "dataset.format must be csv or binary")
    if dataset["kind"] == "files":
        for key in ("train", "test"):
            _require(key in dataset, f"dataset.{key} is required for kind 'files'")
            path = dataset[key] if os.path.isabs(dataset[key]) else os.path.join(base_dir, dataset[key])
            _require(os.path.exists(path), f"dataset.{key}: file not found: {path}")

    model = raw.get("model", {})
    optim = dict(raw.get("optim", {}))
    epochs = int(optim.pop("epochs", 30))
    _require(epochs >= 0, "optim.epochs must be >= 0")
    try:
        train = TrainConfig(hidden=tuple(model.get("hidden", (32,))), **optim)
    except TypeError as exc:
        raise ConfigError(f"optim: {exc}") from None

    mit_raw = raw.get("mitigation", {})
    mitigation = _mitigation(mit_raw, "mitigation", epochs)
    measure = mit_raw.get("measure")
    if measure is not None:
        for seed in seeds:
            path = measure.format(seed=seed)
            path = path if os.path.isabs(path) else os.path.join(base_dir, path)
            _require(os.path.exists(path), f"mitigation.measure: file not found: {path}")

    ens = raw.get("ensemble", {})
    t_members = int(ens.get("t_members", 5))
    _require(t_members >= 1, "ensemble.t_members must be >= 1")
    _require(ens.get("dump_format", "binary") in ("csv", "binary"),
             "ensemble.dump_format must be csv or binary")

    analysis = dict(raw.get("analysis", {}))
    if analysis:
        _require(analysis.get("kind") in KINDS,
                 f"analysis.kind must be one of {list(KINDS)}, got {analysis.get('kind')!r}")
        if "lambda_list" in analysis:
            _require(all(0 <= float(v) <= 1 for v in analysis["lambda_list"]),
                     "analysis.lambda_list entries must lie in [0, 1]")
        if "ir_list" in analysis:
            _require(all(float(v) >= 1 for v in analysis["ir_list"]),
                     "analysis.ir_list entries must be >= 1")
        methods = analysis.get("methods", "default")
        if methods != "default":
            _require(isinstance(methods, list) and methods, "analysis.methods must be 'default' or a list")
            parsed = {}
            for i, m in enumerate(methods):
                where = f"analysis.methods[{i}]"
                _require(isinstance(m, dict) and "name" in m and "group" in m and "stages" in m,
                         f"{where} needs name, group and stages")
                _require(m["group"] in GROUPS, f"{where}: unknown group {m['group']!r}")
                parsed[m["name"]] = (m["group"], _mitigation(m, where, epochs))
            analysis["methods"] = parsed

    return ExperimentConfig(
        raw=raw, seeds=list(seeds), output=raw.get("output"), dataset=dataset, train=train,
        epochs=epochs, mitigation=mitigation, measure_path=measure, t_members=t_members,
        ensemble_base_seed=ens.get("base_seed"), ensemble_epochs=ens.get("epochs"),
        dump_format=ens.get("dump_format", "binary"), analysis=analysis, base_dir=base_dir,
    )


def load_config(path, seeds=None) -> ExperimentConfig:
    """Parse and validate a YAML config; ``seeds`` replaces the file's seed list."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}".replace("\n", " ")) from None
    raw = raw or {}
    if seeds is not None and isinstance(raw, dict):
        raw = {**raw, "seeds": list(seeds)}
    return parse_config(raw, base_dir=os.path.dirname(os.path.abspath(path)))


def methods_for(cfg: ExperimentConfig) -> dict:
    methods = cfg.analysis.get("methods", "default")
    if methods == "default":
        return default_methods(cfg.epochs, cfg.analysis.get("stage1_epochs"))
    return methods
