"""Command-line entry point: ``classunc {synth,uncertainty,train,analyze} --config FILE``.

All randomness comes from the config seeds, so rerunning a command with the
same config writes byte-identical files. Failures exit nonzero with a single
``error[<category>]: <message>`` line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys

import numpy as np
import yaml

from classunc import analysis, ensemble, trainer
from classunc.config import ExperimentConfig, load_config, methods_for
from classunc.datasets import dataset_to_bytes, dataset_to_csv, manifest_text
from classunc.errors import ClassUncError, ConfigError, MeasureRequiredError
from classunc.fileio import (atomic_write_bytes, atomic_write_text, class_vector_csv,
                             config_hash)
from classunc.measures import load_measure, measure_to_csv
from classunc.samplers import RNG_ALGORITHM


class _Out:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, *args):
        if not self.quiet:
            print(*args)


def _out_dir(cfg: ExperimentConfig, override: str | None) -> str:
    if override:
        path = override
    elif cfg.output:
        path = cfg.resolve(cfg.output)
    else:
        raise ConfigError("no output directory: pass --out or set 'output' in the config")
    if not os.path.isdir(path):
        raise ConfigError(f"output directory does not exist: {path}")
    return path


def _config_digest(cfg: ExperimentConfig) -> str:
    return config_hash(cfg.raw)


def _ensemble_seed(cfg: ExperimentConfig, seed: int) -> int:
    if cfg.ensemble_base_seed is not None:
        return int(cfg.ensemble_base_seed) + 1000 * seed
    return cfg.setup().ensemble_seed(seed)


# --- commands -------------------------------------------------------------------


def cmd_synth(cfg: ExperimentConfig, out: str, say, jobs: int = 1) -> list[str]:
    if cfg.dataset["kind"] == "files":
        raise ConfigError("synth needs a generated dataset kind, not 'files'")
    data = cfg.data()
    binary = cfg.dataset.get("format", "csv") == "binary"
    ext = "bin" if binary else "csv"
    encode = dataset_to_bytes if binary else (lambda ds: dataset_to_csv(ds).encode())
    # build everything first so a failure leaves no partial output
    pending, files, counts = [], {}, {}
    for seed in cfg.seeds:
        train_set, test_set = data.train(seed), data.test(seed)
        names = (f"train_s{seed}.{ext}", f"test_s{seed}.{ext}")
        pending += [(names[0], encode(train_set)), (names[1], encode(test_set))]
        files[str(seed)] = {"train": names[0], "test": names[1]}
        counts[str(seed)] = {"train": train_set.class_counts.tolist(),
                             "test": test_set.class_counts.tolist()}
        say(f"seed {seed}: train counts {train_set.class_counts.tolist()}")
    manifest = {
        "config_hash": _config_digest(cfg),
        "dataset": data.to_dict(),
        "seeds": cfg.seeds,
        "rng": {"algorithm": RNG_ALGORITHM,
                "streams": "SeedSequence([seed, code]); train=0 test=1 subsample=2 duplicate=3"},
        "files": files,
        "class_counts": counts,
        "format": "binary" if binary else "csv",
        "num_classes": data.train(cfg.seeds[0]).num_classes,
    }
    pending.append(("manifest.json", manifest_text(manifest).encode()))
    written = []
    for name, payload in pending:
        path = os.path.join(out, name)
        atomic_write_bytes(path, payload)
        written.append(path)
    return written


def _per_example_csv(report, labels) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["example_index", "label", "predictive", "epistemic_mi", "aleatoric_ee"])
    for i, (y, u, mi, ee) in enumerate(zip(labels, report.per_example_u, report.epistemic_mi,
                                          report.aleatoric_ee)):
        w.writerow([i, int(y), repr(float(u)), repr(float(mi)), repr(float(ee))])
    return buf.getvalue()


def cmd_uncertainty(cfg: ExperimentConfig, out: str, say, jobs: int = 1) -> list[str]:
    data = cfg.data()
    written = []
    for seed in cfg.seeds:
        train_set = data.train(seed)
        models = ensemble.train_ensemble(train_set, cfg.train, cfg.ensemble_epochs or cfg.epochs,
                                         cfg.t_members, _ensemble_seed(cfg, seed), jobs)
        ens = ensemble.predict(models, train_set.features)
        report = ensemble.uncertainty_report(ens, train_set.labels, train_set.num_classes)
        dump = f"ensemble_s{seed}." + ("csv" if cfg.dump_format == "csv" else "ensp")
        outputs = {
            dump: (ensemble.predictions_to_csv(ens).encode() if cfg.dump_format == "csv"
                   else ensemble.predictions_to_bytes(ens)),
            f"uncertainty_s{seed}.csv": report.to_csv().encode(),
            f"measure_s{seed}.csv": measure_to_csv(report.measure()).encode(),
            f"per_example_s{seed}.csv": _per_example_csv(report, train_set.labels).encode(),
        }
        for name, payload in outputs.items():
            path = os.path.join(out, name)
            atomic_write_bytes(path, payload)
            written.append(path)
        say(f"seed {seed}: mu_U = {np.round(report.class_normalized, 4).tolist()}")
    return written


def _train_cell(args):
    data, config, spec, seed, measure = args
    return trainer.run(data.train(seed), data.test(seed), config, spec, seed, measure=measure)


def cmd_train(cfg: ExperimentConfig, out: str, say, jobs: int = 1) -> list[str]:
    spec = cfg.mitigation
    measures = {}
    for seed in cfg.seeds:
        path = cfg.measure_file(seed)
        if spec.needs_uncertainty:
            if path is None:
                raise MeasureRequiredError(
                    "measure required: uncertainty-based mitigation needs mitigation.measure")
            measures[seed] = load_measure(path)
    data = cfg.data()
    digest = trainer.run_hash(cfg.train, spec)
    tasks = [(data, cfg.train, spec, seed, measures.get(seed)) for seed in cfg.seeds]
    results = analysis.map_cells(_train_cell, tasks, jobs)
    written, errors = [], []
    for seed, result in zip(cfg.seeds, results):
        train_set = data.train(seed)
        measure = measures.get(seed)
        path = os.path.join(out, f"run_s{seed}.json")
        atomic_write_text(path, trainer.to_report_text(result, digest))
        written.append(path)
        for k, stage in enumerate(spec.stages):
            loss_spec = trainer.stage_loss_spec(stage, train_set.class_counts, measure)
            vectors = {"alpha": trainer.stage_alpha(stage, 0, train_set.class_counts, measure).alpha}
            if loss_spec.weights is not None:
                vectors["weights"] = loss_spec.weights.w
            if loss_spec.margin is not None:
                vectors["margins"] = loss_spec.margin.deltas
            for name, values in vectors.items():
                vpath = os.path.join(out, f"run_s{seed}_stage{k}_{name}.csv")
                atomic_write_text(vpath, class_vector_csv(values, name))
                written.append(vpath)
        errors.append(result.top1_error)
        say(f"seed {seed}: top-1 error {result.top1_error:.2f}%")
    aggregate = {
        "config_hash": digest,
        "seeds": cfg.seeds,
        "top1_error": errors,
        "mean": float(np.mean(errors)),
        "std": float(np.std(errors, ddof=1)) if len(errors) > 1 else 0.0,
    }
    path = os.path.join(out, "aggregate.json")
    atomic_write_text(path, manifest_text(aggregate))
    written.append(path)
    say(f"top-1 error {aggregate['mean']:.2f} ± {aggregate['std']:.2f} over {len(errors)} seed(s)")
    return written


def cmd_analyze(cfg: ExperimentConfig, out: str, say, jobs: int = 1) -> list[str]:
    kind = cfg.analysis.get("kind")
    if kind not in analysis.KINDS:
        raise ConfigError(f"analysis.kind must be one of {list(analysis.KINDS)}, got {kind!r}")
    setup = cfg.setup(jobs)
    if kind == "IF1a":
        report = analysis.run_if1a(cfg.data(), setup, cfg.seeds)
        say(f"rho(mu_C, error): {report.summary['rho_c']}")
        say(f"rho(mu_U, error): {report.summary['rho_u']}")
    elif kind == "IF1b":
        ir_list = cfg.analysis.get("ir_list", [1, 2, 10, 20, 50])
        report = analysis.run_if1b(cfg.family(), int(cfg.dataset.get("n_bar", 500)), ir_list,
                                   setup, cfg.seeds)
        for row in zip(*report.tables["if1b_tail"].values()):
            say("IR {:g}: tail mu_C {:.4f}, median tail mu_U {:.4f}".format(*row))
    elif kind == "IF2":
        lambdas = cfg.analysis.get("lambda_list", [0, 0.3, 0.5, 0.7, 1.0])
        report = analysis.run_if2(cfg.family(), cfg.long_tail_spec(), lambdas, setup, cfg.seeds)
        for row in zip(*report.tables["if2_summary"].values()):
            say("lambda {:g}: median drift mu_C {:.4f}, mu_U {:.4f}".format(*row))
    else:
        report = analysis.run_mitigation_compare(methods_for(cfg), cfg.data(), setup, cfg.seeds)
        say(analysis.format_table(report))
    return report.write(out)


COMMANDS = {"synth": cmd_synth, "uncertainty": cmd_uncertainty, "train": cmd_train,
            "analyze": cmd_analyze}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="classunc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--out", help="existing output directory (overrides config 'output')")
        p.add_argument("--seed", type=int, help="run only this seed")
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
        p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, None if args.seed is None else [args.seed])
        out = _out_dir(cfg, args.out)
        COMMANDS[args.command](cfg, out, _Out(args.quiet), max(1, args.jobs))
    except ConfigError as exc:
        print(f"error[{exc.category}]: {_one_line(exc)}", file=sys.stderr)
        return 2
    except ClassUncError as exc:
        print(f"error[{exc.category}]: {_one_line(exc)}", file=sys.stderr)
        return 1
    except (ValueError, yaml.YAMLError) as exc:
        print(f"error[invalid-input]: {_one_line(exc)}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error[io]: {_one_line(exc)}", file=sys.stderr)
        return 1
    return 0


def _one_line(exc) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())
