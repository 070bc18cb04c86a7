import json
import subprocess
import sys

import numpy as np
import pytest

from risda.cli import main
from risda.dataset import load_csv

TINY = [
    "--set", "num_classes=3", "--set", "max_count=40", "--set", "input_dim=4",
    "--set", "test_per_class=10", "--set", "hidden_dims=[8]", "--set", "feature_dim=4",
    "--set", "total_epochs=5", "--set", "decay_epochs=[4]", "--set", "warmup_epochs=1",
    "--set", "batch_size=20", "--set", "head_k=1",
]


def test_synth_is_byte_identical(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "a"), "--seed", "3"]) == 0
    assert main(["synth", "--out", str(tmp_path / "b"), "--seed", "3"]) == 0
    for name in ("train.csv", "test.csv", "spec.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_synth_balanced(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--set", "imbalance_factor=1", "--set", "max_count=30"]) == 0
    train = load_csv(tmp_path / "train.csv")
    assert train.class_counts.tolist() == [30] * 10


def test_refuses_non_empty_out(tmp_path, capsys):
    (tmp_path / "keep.txt").write_text("x")
    assert main(["synth", "--out", str(tmp_path)]) == 2
    assert "--force" in capsys.readouterr().err
    assert main(["synth", "--out", str(tmp_path), "--force"]) == 0


def test_unknown_key(tmp_path, capsys):
    assert main(["train", "--out", str(tmp_path), "--set", "alpha_zero=0.5"]) == 2
    err = capsys.readouterr().err
    assert "alpha_zero" in err and "alpha0" in err


def test_out_of_range_strength_accepted(tmp_path):
    assert main(["train", "--out", str(tmp_path), *TINY, "--set", "beta0=7.5"]) == 0
    run = next(tmp_path.glob("run-*"))
    assert json.loads((run / "config.json").read_text())["beta0"] == 7.5


def test_invalid_value_exits_nonzero(tmp_path):
    assert main(["train", "--out", str(tmp_path), *TINY, "--set", "loss=focal"]) == 1


def test_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"alpha0": 0.25, "seeds": [1]}))
    out = tmp_path / "out"
    assert main(["train", "--out", str(out), "--config", str(cfg), *TINY]) == 0
    saved = json.loads((out / "experiment.json").read_text())
    assert saved["alpha0"] == 0.25 and saved["seeds"] == [1]


def test_ablate_three_runs_per_seed(tmp_path):
    assert main(["ablate", "--out", str(tmp_path), *TINY, "--seeds", "0,1"]) == 0
    assert len(list(tmp_path.glob("run-*"))) == 6


def test_verify_lists_checks(tmp_path, capsys):
    assert main(["verify", "--check", "graph_rows", "--check", "stats_merge", "--out", str(tmp_path / "v.json")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["passed"] and len(report["checks"]) == 2
    from risda.verify import CHECKS
    assert len(CHECKS) >= 5
    assert main(["verify", "--check", "nope"]) == 2


def test_plot_is_deterministic(tmp_path):
    run_root = tmp_path / "runs"
    assert main(["train", "--out", str(run_root), *TINY]) == 0
    assert main(["plot", str(run_root), "--out", str(tmp_path / "p1")]) == 0
    assert main(["plot", str(run_root), "--out", str(tmp_path / "p2")]) == 0
    svgs = sorted((tmp_path / "p1").glob("*.svg"))
    assert svgs
    for svg in svgs:
        assert svg.read_bytes() == (tmp_path / "p2" / svg.name).read_bytes()
        assert svg.read_text().lstrip().startswith("<?xml")


def test_sweep_heatmap(tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep", "--out", str(out), *TINY, "--alphas", "0.25,0.5", "--betas", "0.5,1.0"]) == 0
    rows = (out / "summary.csv").read_text().splitlines()
    assert len(rows) == 5
    assert main(["plot", str(out)]) == 0
    assert (out / "heatmap.svg").exists()
    grid = np.loadtxt(out / "heatmap.csv", delimiter=",", skiprows=1, ndmin=2)
    assert grid.size > 0


def test_plot_missing_metrics(tmp_path, capsys):
    assert main(["plot", str(tmp_path)]) == 1
    assert "no metrics" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "risda", "synth", "--out", str(tmp_path), "--set", "max_count=20"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "train.csv").exists()


def test_missing_subcommand():
    with pytest.raises(SystemExit):
        main([])
