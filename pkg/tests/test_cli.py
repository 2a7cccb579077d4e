import csv
import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from classunc.cli import main

SMALL = {
    "seeds": [0, 1],
    "dataset": {"kind": "long_tail", "num_classes": 4, "dim": 4, "n_bar": 40,
                "imbalance_ratio": 5, "test_per_class": 10},
    "model": {"hidden": [8]},
    "optim": {"epochs": 3, "batch_size": 32, "learning_rate": 0.05},
    "ensemble": {"t_members": 2},
}


def _config(tmp_path, name="c.yaml", **sections):
    raw = {**SMALL, **sections}
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw))
    return str(path)


def _outdir(tmp_path, name="out"):
    d = tmp_path / name
    d.mkdir()
    return d


def _snapshot(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def _err_line(capsys):
    lines = capsys.readouterr().err.strip().splitlines()
    assert len(lines) == 1
    return lines[0]


def test_synth_100_class_tail_count(tmp_path):
    cfg = _config(tmp_path, seeds=[0], dataset={
        "kind": "long_tail", "num_classes": 100, "dim": 3, "n_bar": 500,
        "imbalance_ratio": 100, "test_per_class": 1, "format": "binary"})
    out = _outdir(tmp_path)
    assert main(["synth", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    counts = manifest["class_counts"]["0"]["train"]
    assert counts[0] == 500 and counts[99] == 5
    assert sorted(p.name for p in out.iterdir()) == ["manifest.json", "test_s0.bin", "train_s0.bin"]


def test_synth_ir1_is_balanced(tmp_path, capsys):
    cfg = _config(tmp_path, dataset={**SMALL["dataset"], "imbalance_ratio": 1})
    out = _outdir(tmp_path)
    assert main(["synth", "--config", cfg, "--out", str(out)]) == 0
    assert "[40, 40, 40, 40]" in capsys.readouterr().out
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["class_counts"]["1"]["train"] == [40] * 4


def test_missing_output_dir_writes_nothing(tmp_path, capsys):
    cfg = _config(tmp_path)
    missing = tmp_path / "nope"
    assert main(["synth", "--config", cfg, "--out", str(missing)]) != 0
    assert not missing.exists()
    assert _err_line(capsys).startswith("error[config]:")


def test_synth_failure_leaves_no_partial_files(tmp_path, capsys):
    cfg = _config(tmp_path, dataset={**SMALL["dataset"], "n_bar": 3, "imbalance_ratio": 50})
    out = _outdir(tmp_path)
    assert main(["synth", "--config", cfg, "--out", str(out)]) != 0
    assert list(out.iterdir()) == []
    _err_line(capsys)


def test_uncertainty_single_member(tmp_path):
    cfg = _config(tmp_path, ensemble={"t_members": 1, "dump_format": "csv"})
    out = _outdir(tmp_path)
    assert main(["uncertainty", "--config", cfg, "--out", str(out), "--seed", "1", "--quiet"]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["ensemble_s1.csv", "measure_s1.csv", "per_example_s1.csv", "uncertainty_s1.csv"]
    with open(out / "uncertainty_s1.csv") as fh:
        mu = [float(r["mu"]) for r in csv.DictReader(fh)]
    assert abs(sum(mu) - 1) <= 1e-9


def test_train_requires_measure(tmp_path, capsys):
    cfg = _config(tmp_path, mitigation={"stages": [{"epochs": 3, "weights": "ubrw"}]})
    out = _outdir(tmp_path)
    assert main(["train", "--config", cfg, "--out", str(out)]) != 0
    line = _err_line(capsys)
    assert line.startswith("error[measure-required]:") and "measure required" in line
    assert list(out.iterdir()) == []


def test_train_aggregate_two_seeds(tmp_path):
    cfg = _config(tmp_path)
    out = _outdir(tmp_path)
    assert main(["train", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    agg = json.loads((out / "aggregate.json").read_text())
    errs = [json.loads((out / f"run_s{s}.json").read_text())["top1_error"] for s in (0, 1)]
    assert agg["seeds"] == [0, 1] and agg["top1_error"] == errs
    assert agg["mean"] == pytest.approx(np.mean(errs))
    assert agg["std"] == pytest.approx(np.std(errs, ddof=1))


def test_uncertainty_then_ubrw_training(tmp_path):
    out = _outdir(tmp_path)
    cfg = _config(tmp_path)
    assert main(["uncertainty", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    cfg2 = _config(tmp_path, "t.yaml", mitigation={
        "measure": str(out / "measure_s{seed}.csv"),
        "stages": [{"epochs": 2}, {"epochs": 1, "weights": "ubrw", "margin": "ubm"}]})
    res = _outdir(tmp_path, "res")
    assert main(["train", "--config", cfg2, "--out", str(res), "--quiet"]) == 0
    with open(out / "uncertainty_s0.csv") as fh:
        mu = np.array([float(r["mu"]) for r in csv.DictReader(fh)])
    with open(res / "run_s0_stage1_weights.csv") as fh:
        w = np.array([float(r["weights"]) for r in csv.DictReader(fh)])
    np.testing.assert_array_equal(w, mu * 4)
    assert json.loads((res / "run_s0.json").read_text())["mitigation_paths"] == \
        ["weights:ubrw", "margin:ubm"]


def test_easy_two_class_training(tmp_path):
    cfg = _config(tmp_path, seeds=[0], dataset={"kind": "balanced", "num_classes": 2, "dim": 2,
                                                "n_bar": 100, "noise": 0.3, "spacing": 4.0},
                  optim={"epochs": 60, "batch_size": 32})
    out = _outdir(tmp_path)
    assert main(["train", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    assert json.loads((out / "aggregate.json").read_text())["mean"] < 5


@pytest.mark.parametrize("kind,key,size", [
    ("IF2", "if2_summary", 5), ("IF1b", "if1b_tail", 5)])
def test_analyze_tables(tmp_path, kind, key, size):
    cfg = _config(tmp_path, seeds=[0], optim={"epochs": 1}, analysis={
        "kind": kind, "lambda_list": [0, 0.3, 0.5, 0.7, 1.0], "ir_list": [1, 2, 10, 20, 50]})
    out = _outdir(tmp_path)
    assert main(["analyze", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    with open(out / f"{key}.csv") as fh:
        assert len(list(csv.DictReader(fh))) == size


def test_analyze_unknown_kind_lists_valid(tmp_path, capsys):
    cfg = _config(tmp_path, analysis={"kind": "IF9"})
    out = _outdir(tmp_path)
    assert main(["analyze", "--config", cfg, "--out", str(out)]) != 0
    line = _err_line(capsys)
    for k in ("IF1a", "IF1b", "IF2", "mitigation-compare"):
        assert k in line


def test_unknown_config_key(tmp_path, capsys):
    cfg = _config(tmp_path, optim={"epochs": 3, "learning_rat": 0.1})
    assert main(["train", "--config", cfg, "--out", str(_outdir(tmp_path))]) == 2
    assert "learning_rat" in _err_line(capsys)


def test_bad_dataset_file_reports_line(tmp_path, capsys):
    (tmp_path / "tr.csv").write_text("f0,label\n0.5,0\n0.1\n")
    (tmp_path / "te.csv").write_text("f0,label\n0.5,0\n1.0,1\n")
    cfg = _config(tmp_path, dataset={"kind": "files", "train": "tr.csv", "test": "te.csv"})
    assert main(["train", "--config", cfg, "--out", str(_outdir(tmp_path))]) == 1
    assert _err_line(capsys).startswith("error[dataset-format]: line 3")


@pytest.mark.parametrize("command,extra", [
    ("synth", {}), ("uncertainty", {}), ("train", {}),
    ("analyze", {"analysis": {"kind": "mitigation-compare", "methods": [
        {"name": "CB", "group": "resampling", "stages": [{"epochs": 2, "sampler": "cb"}]}]}}),
])
def test_commands_are_byte_identical_on_rerun(tmp_path, command, extra):
    cfg = _config(tmp_path, **extra)
    a, b = _outdir(tmp_path, "a"), _outdir(tmp_path, "b")
    assert main([command, "--config", cfg, "--out", str(a), "--quiet"]) == 0
    assert main([command, "--config", cfg, "--out", str(b), "--quiet", "--jobs", "2"]) == 0
    assert _snapshot(a) == _snapshot(b) and _snapshot(a)


def test_console_entry_point(tmp_path):
    cfg = _config(tmp_path)
    proc = subprocess.run([sys.executable, "-m", "classunc.cli", "analyze", "--config", cfg,
                           "--out", str(tmp_path / "missing")], capture_output=True, text=True)
    assert proc.returncode == 2
    assert proc.stderr.count("\n") == 1 and proc.stderr.startswith("error[")


def test_seed_flag_checks_only_that_seeds_measure(tmp_path):
    unc = _outdir(tmp_path, "unc")
    assert main(["uncertainty", "--config", _config(tmp_path), "--out", str(unc), "--seed", "1",
                 "--quiet"]) == 0
    cfg = _config(tmp_path, "t.yaml", mitigation={"measure": str(unc / "measure_s{seed}.csv"),
                                                  "stages": [{"epochs": 2, "sampler": "ubrs"}]})
    out = _outdir(tmp_path)
    assert main(["train", "--config", cfg, "--out", str(out), "--quiet"]) == 2
    assert main(["train", "--config", cfg, "--out", str(out), "--seed", "1", "--quiet"]) == 0
    assert json.loads((out / "aggregate.json").read_text())["seeds"] == [1]
