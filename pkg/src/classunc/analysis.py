"""Measure analyses (IF1a, IF1b, IF2) and mitigation comparisons.

Each runner returns an :class:`AnalysisReport` whose tables are dicts of
equal-length columns, ready to dump as CSV.

- IF1a: does the measure rank classes like the naive classifier's test error?
- IF1b: how does the measure move as the imbalance ratio grows?
- IF2: how much does the measure drift when the tail is oversampled by
  literal duplication?
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from classunc.datasets import (Dataset, GaussianFamily, LongTailSpec, SemanticSpec,
                               balanced_test_split, duplicate_to_counts,
                               long_tail_dataset, semantic_dataset)
from classunc.ensemble import class_uncertainty_measure
from classunc.errors import ConfigError
from classunc.fileio import atomic_write_text, config_hash, table_csv
from classunc.measures import ImbalanceMeasure, cardinality_measure, spearman_rho
from classunc.samplers import duplication_probs
from classunc.trainer import MitigationSpec, TrainConfig, run

KINDS = ("IF1a", "IF1b", "IF2", "mitigation-compare")


# --- experiment inputs ----------------------------------------------------------


@dataclass(frozen=True)
class Setup:
    """Training settings shared by every cell of an analysis."""

    train: TrainConfig = TrainConfig()
    epochs: int = 30
    t_members: int = 5
    jobs: int = 1

    def ensemble_seed(self, seed: int) -> int:
        # members use seeds ensemble_seed .. ensemble_seed + T - 1, disjoint from run seeds
        return 1000 * int(seed) + 1

    def to_dict(self) -> dict:
        return {"train": asdict(self.train), "epochs": self.epochs, "t_members": self.t_members}


@dataclass(frozen=True)
class LongTailData:
    family: GaussianFamily
    spec: LongTailSpec
    test_per_class: int = 100

    def train(self, seed: int) -> Dataset:
        return long_tail_dataset(self.family, self.spec, seed)

    def test(self, seed: int) -> Dataset:
        return balanced_test_split(self.family, self.test_per_class, seed)

    def to_dict(self) -> dict:
        return {"kind": "long_tail", "family": asdict(self.family), "spec": asdict(self.spec),
                "test_per_class": self.test_per_class}


@dataclass(frozen=True)
class SemanticData:
    spec: SemanticSpec
    test_per_class: int = 100

    def train(self, seed: int) -> Dataset:
        return semantic_dataset(self.spec, seed)

    def test(self, seed: int) -> Dataset:
        return balanced_test_split(self.spec.family(), self.test_per_class, seed)

    def to_dict(self) -> dict:
        return {"kind": "semantic", "spec": asdict(self.spec), "test_per_class": self.test_per_class}


@dataclass(frozen=True)
class FixedData:
    """Pre-built train/test sets (e.g. loaded from files); identical for every seed."""

    train_set: Dataset
    test_set: Dataset
    label: str = "files"

    def train(self, seed: int) -> Dataset:
        return self.train_set

    def test(self, seed: int) -> Dataset:
        return self.test_set

    def to_dict(self) -> dict:
        return {"kind": "fixed", "label": self.label,
                "train_counts": self.train_set.class_counts.tolist()}


@dataclass
class AnalysisReport:
    kind: str
    tables: dict
    seeds: list
    provenance: str
    summary: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown analysis kind {self.kind!r}; expected one of {KINDS}")
        for name, cols in self.tables.items():
            if len({len(v) for v in cols.values()}) > 1:
                raise ValueError(f"table {name!r} has columns of unequal length")

    def to_json(self) -> str:
        payload = {"kind": self.kind, "seeds": self.seeds, "config_hash": self.provenance,
                   "summary": self.summary, "tables": self.tables}
        return json.dumps(payload, indent=2, sort_keys=True, default=_plain) + "\n"

    def write(self, out_dir) -> list[str]:
        """Write ``report.json`` and one CSV per table; returns the paths written."""
        paths = [os.path.join(out_dir, "report.json")]
        atomic_write_text(paths[0], self.to_json())
        for name, cols in self.tables.items():
            path = os.path.join(out_dir, f"{name}.csv")
            atomic_write_text(path, table_csv(cols))
            paths.append(path)
        return paths


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


def map_cells(fn, tasks, jobs: int):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _uncertainty(ds: Dataset, setup: Setup, seed: int) -> ImbalanceMeasure:
    measure, _, _ = class_uncertainty_measure(ds, setup.train, setup.epochs, setup.t_members,
                                              setup.ensemble_seed(seed))
    return measure


def _rho_value(r):
    return r.value if r.defined else None


def _median(values):
    return float(np.median(values))


def _l1(a, b) -> float:
    return float(np.abs(np.asarray(a) - np.asarray(b)).sum())


# --- IF1a ------------------------------------------------------------------------


def _if1a_cell(args):
    data, setup, seed = args
    train_set, test_set = data.train(seed), data.test(seed)
    result = run(train_set, test_set, setup.train, MitigationSpec.naive(setup.epochs), seed)
    mu_c = cardinality_measure(train_set.class_counts)
    mu_u = _uncertainty(train_set, setup, seed)
    return train_set.class_counts, mu_c, mu_u, np.asarray(result.per_class_error)


def run_if1a(data, setup: Setup, seeds) -> AnalysisReport:
    """Rank agreement between each measure and the naive classifier's per-class test error."""
    seeds = [int(s) for s in seeds]
    probe = data.train(seeds[0])
    if probe.num_classes < 2:
        raise ValueError("IF1a needs at least 2 classes to rank")
    cells = map_cells(_if1a_cell, [(data, setup, s) for s in seeds], setup.jobs)
    per_class = {k: [] for k in ("seed", "class_index", "count", "mu_c", "mu_u", "test_error")}
    rho = {"seed": [], "rho_c": [], "rho_u": []}
    for seed, (counts, mu_c, mu_u, err) in zip(seeds, cells):
        for c in range(len(counts)):
            per_class["seed"].append(seed)
            per_class["class_index"].append(c)
            per_class["count"].append(int(counts[c]))
            per_class["mu_c"].append(float(mu_c.normalized[c]))
            per_class["mu_u"].append(float(mu_u.normalized[c]))
            per_class["test_error"].append(float(err[c]))
        rho["seed"].append(seed)
        rho["rho_c"].append(_rho_value(spearman_rho(mu_c.normalized, err)))
        rho["rho_u"].append(_rho_value(spearman_rho(mu_u.normalized, err)))
    summary = {}
    for key in ("rho_c", "rho_u"):
        defined = [v for v in rho[key] if v is not None]
        summary[key] = {
            "defined": len(defined) == len(rho[key]),
            "mean": float(np.mean(defined)) if defined else None,
            "median": _median(defined) if defined else None,
        }
    return AnalysisReport("IF1a", {"if1a_per_class": per_class, "if1a_rho": rho}, seeds,
                          config_hash({"data": data.to_dict(), "setup": setup.to_dict()}), summary)


# --- IF1b ------------------------------------------------------------------------


def _if1b_cell(args):
    family, n_bar, ir, setup, seed = args
    ds = long_tail_dataset(family, LongTailSpec(n_bar, ir, family.num_classes), seed)
    return ds.class_counts, cardinality_measure(ds.class_counts), _uncertainty(ds, setup, seed)


def run_if1b(family: GaussianFamily, n_bar: int, ir_list, setup: Setup, seeds) -> AnalysisReport:
    """Both measures per class as the imbalance ratio grows."""
    seeds = [int(s) for s in seeds]
    ir_list = [float(r) for r in ir_list]
    tasks = [(family, n_bar, ir, setup, s) for ir in ir_list for s in seeds]
    cells = iter(map_cells(_if1b_cell, tasks, setup.jobs))
    rows = {k: [] for k in ("ir", "seed", "class_index", "count", "mu_c", "mu_u")}
    medians = {"ir": [], "class_index": [], "mu_c": [], "mu_u_median": []}
    tail = {"ir": [], "tail_mu_c": [], "tail_mu_u_median": []}
    C = family.num_classes
    for ir in ir_list:
        mu_us, mu_c = [], None
        for seed in seeds:
            counts, mu_c, mu_u = next(cells)
            mu_us.append(mu_u.normalized)
            for c in range(C):
                rows["ir"].append(ir)
                rows["seed"].append(seed)
                rows["class_index"].append(c)
                rows["count"].append(int(counts[c]))
                rows["mu_c"].append(float(mu_c.normalized[c]))
                rows["mu_u"].append(float(mu_u.normalized[c]))
        med = np.median(np.stack(mu_us), axis=0)
        for c in range(C):
            medians["ir"].append(ir)
            medians["class_index"].append(c)
            medians["mu_c"].append(float(mu_c.normalized[c]))
            medians["mu_u_median"].append(float(med[c]))
        tail["ir"].append(ir)
        tail["tail_mu_c"].append(float(mu_c.normalized[-1]))
        tail["tail_mu_u_median"].append(float(med[-1]))
    cfg = {"family": asdict(family), "n_bar": n_bar, "ir_list": ir_list, "setup": setup.to_dict()}
    return AnalysisReport("IF1b", {"if1b_per_class": rows, "if1b_median": medians, "if1b_tail": tail},
                          seeds, config_hash(cfg), {"tail": tail})


# --- IF2 -------------------------------------------------------------------------


def materialized_counts(class_counts, lam: float) -> np.ndarray:
    """Per-class counts after duplication at strength ``lam``.

    The largest class keeps its count and the others follow the
    duplication-strength class probabilities; ``lam = 1`` gives every class
    ``max(N_c)`` rows. Classes never shrink.
    """
    n = np.asarray(class_counts, dtype=np.int64)
    if lam == 1:
        return np.full_like(n, n.max())
    alpha = duplication_probs(lam, n).alpha
    head = int(np.argmax(n))
    target = np.floor(n[head] * alpha / alpha[head] + 0.5).astype(np.int64)
    return np.maximum(target, n)


def _if2_cell(args):
    family, spec, lam, setup, seed = args
    base = long_tail_dataset(family, spec, seed)
    ds = duplicate_to_counts(base, materialized_counts(base.class_counts, lam), seed)
    return ds.class_counts, cardinality_measure(ds.class_counts), _uncertainty(ds, setup, seed)


def run_if2(family: GaussianFamily, spec: LongTailSpec, lambda_list, setup: Setup,
            seeds) -> AnalysisReport:
    """L1 drift of each normalized measure from its value on the original dataset."""
    seeds = [int(s) for s in seeds]
    lambda_list = [float(v) for v in lambda_list]
    if any(not 0 <= v <= 1 for v in lambda_list):
        raise ValueError("duplication strengths must lie in [0, 1]")
    lams = [0.0] + [v for v in lambda_list if v != 0.0]
    tasks = [(family, spec, lam, setup, s) for lam in lams for s in seeds]
    cells = dict(zip([(lam, s) for lam in lams for s in seeds], map_cells(_if2_cell, tasks, setup.jobs)))
    rows = {k: [] for k in ("lambda", "seed", "class_index", "count", "mu_c", "mu_u")}
    drift = {"lambda": [], "seed": [], "drift_c": [], "drift_u": []}
    summary = {"lambda": [], "drift_c_median": [], "drift_u_median": []}
    for lam in lambda_list:
        dc, du = [], []
        for seed in seeds:
            counts, mu_c, mu_u = cells[(lam, seed)]
            _, ref_c, ref_u = cells[(0.0, seed)]
            for c in range(len(counts)):
                rows["lambda"].append(lam)
                rows["seed"].append(seed)
                rows["class_index"].append(c)
                rows["count"].append(int(counts[c]))
                rows["mu_c"].append(float(mu_c.normalized[c]))
                rows["mu_u"].append(float(mu_u.normalized[c]))
            dc.append(_l1(mu_c.normalized, ref_c.normalized))
            du.append(_l1(mu_u.normalized, ref_u.normalized))
            drift["lambda"].append(lam)
            drift["seed"].append(seed)
            drift["drift_c"].append(dc[-1])
            drift["drift_u"].append(du[-1])
        summary["lambda"].append(lam)
        summary["drift_c_median"].append(_median(dc))
        summary["drift_u_median"].append(_median(du))
    cfg = {"family": asdict(family), "spec": asdict(spec), "lambdas": lambda_list,
           "setup": setup.to_dict()}
    return AnalysisReport("IF2", {"if2_per_class": rows, "if2_drift": drift, "if2_summary": summary},
                          seeds, config_hash(cfg), summary)


# --- mitigation comparison -------------------------------------------------------

GROUPS = ("baseline", "resampling", "reweighting", "margin", "multi-stage")


def default_methods(epochs: int, stage1: int | None = None) -> dict:
    """Cardinality-based methods next to their uncertainty-based counterparts.

    Values are ``(group, MitigationSpec)``. Two-stage methods spend
    ``stage1`` epochs (default 3/4 of ``epochs``) on naive training.
    """
    s1 = stage1 if stage1 is not None else (3 * epochs) // 4
    s2 = epochs - s1
    one = MitigationSpec.single

    def two(**stage2):
        return MitigationSpec.two_stage(s1, s2, **stage2)

    return {
        "naive": ("baseline", MitigationSpec.naive(epochs)),
        "CB resampling": ("resampling", one(epochs, sampler="cb")),
        "PB resampling": ("resampling", one(epochs, sampler="pb")),
        "CSCE": ("reweighting", one(epochs, weights="csce")),
        "Class-balanced": ("reweighting", one(epochs, weights="effective_number")),
        "UBRs": ("resampling", one(epochs, sampler="ubrs")),
        "PB UBRs": ("resampling", one(epochs, sampler="pb_ubrs")),
        "UBRw": ("reweighting", one(epochs, weights="ubrw")),
        "Focal": ("reweighting", one(epochs, loss="focal")),
        "CB Focal": ("reweighting", one(epochs, loss="focal", weights="effective_number")),
        "UBRw Focal": ("reweighting", one(epochs, loss="focal", weights="ubrw")),
        "UBRw+CB Focal": ("reweighting", one(epochs, loss="focal", weights="combined")),
        "LDAM": ("margin", one(epochs, margin="ldam")),
        "UBM LDAM": ("margin", one(epochs, margin="ubm")),
        "Logit-adjusted": ("margin", one(epochs, margin="logit_adjusted")),
        "Two-stage CB": ("multi-stage", two(sampler="cb")),
        "Two-stage CSCE": ("multi-stage", two(weights="csce")),
        "Two-stage UBRs": ("multi-stage", two(sampler="ubrs")),
        "Two-stage UBRw": ("multi-stage", two(weights="ubrw")),
    }


def _compare_cell(args):
    data, setup, methods, seed = args
    train_set, test_set = data.train(seed), data.test(seed)
    needs = any(spec.needs_uncertainty for _, spec in methods.values())
    measure = _uncertainty(train_set, setup, seed) if needs else None
    out = {}
    for name, (_, spec) in methods.items():
        out[name] = run(train_set, test_set, setup.train, spec, seed,
                        measure=measure if spec.needs_uncertainty else None)
    return out


def run_mitigation_compare(methods: dict, data, setup: Setup, seeds) -> AnalysisReport:
    """Top-1 error of every (method, seed) cell, aggregated as mean and std per method."""
    seeds = [int(s) for s in seeds]
    methods = dict(methods)
    for name, (group, spec) in methods.items():
        if group not in GROUPS:
            raise ConfigError(f"method {name!r}: unknown group {group!r}")
        if not isinstance(spec, MitigationSpec):
            raise ConfigError(f"method {name!r}: expected a MitigationSpec")
    if "naive" not in methods:
        epochs = max(spec.total_epochs for _, spec in methods.values()) if methods else setup.epochs
        methods = {"naive": ("baseline", MitigationSpec.naive(epochs)), **methods}
    cells = map_cells(_compare_cell, [(data, setup, methods, s) for s in seeds], setup.jobs)
    runs = {k: [] for k in ("method", "group", "seed", "top1_error", "per_class_error")}
    table = {k: [] for k in ("method", "group", "mean", "std", "n_seeds")}
    for name, (group, _) in methods.items():
        errs = []
        for seed, cell in zip(seeds, cells):
            r = cell[name]
            errs.append(r.top1_error)
            runs["method"].append(name)
            runs["group"].append(group)
            runs["seed"].append(seed)
            runs["top1_error"].append(r.top1_error)
            runs["per_class_error"].append(" ".join(repr(e) for e in r.per_class_error))
        table["method"].append(name)
        table["group"].append(group)
        table["mean"].append(float(np.mean(errs)))
        table["std"].append(float(np.std(errs, ddof=1)) if len(errs) > 1 else 0.0)
        table["n_seeds"].append(len(errs))
    cfg = {"data": data.to_dict(), "setup": setup.to_dict(),
           "methods": {k: [g, s.to_dict()] for k, (g, s) in methods.items()}}
    summary = {m: {"mean": mu, "std": sd}
               for m, mu, sd in zip(table["method"], table["mean"], table["std"])}
    return AnalysisReport("mitigation-compare", {"compare_table": table, "compare_runs": runs},
                          seeds, config_hash(cfg), summary)


def format_table(report: AnalysisReport) -> str:
    """Plain-text grouped table, ``mean±std`` per method."""
    t = report.tables["compare_table"]
    lines = []
    for group in GROUPS:
        rows = [i for i, g in enumerate(t["group"]) if g == group]
        if not rows:
            continue
        lines.append(f"[{group}]")
        for i in rows:
            lines.append(f"  {t['method'][i]:<18} {t['mean'][i]:6.2f}±{t['std'][i]:.2f}")
    return "\n".join(lines)

