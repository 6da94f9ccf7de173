import json
import os
import subprocess
import sys

import numpy as np
import pytest
import yaml

from mksgd.bench import rayleigh_problem, run_benchmark
from mksgd.bench.harness import ConvergenceReport
from mksgd.cli import main
from mksgd.config import parse_config
from mksgd.metrics import CSV_HEADER, emit_metrics
from mksgd.optim import Hyperparams
from mksgd.train import TrainHistory


# emit_metrics --------------------------------------------------------------

def test_empty_report_header_only(tmp_path):
    empty = np.zeros(0)
    rep = ConvergenceReport(empty, empty, empty, empty, 0.0, True)
    paths = emit_metrics(rep, tmp_path, "bench", "sphere", 0, plot=False)
    assert paths["csv"].read_text() == ",".join(CSV_HEADER) + "\n"
    assert json.loads(paths["json"].read_text())["failed"] is True


def test_empty_train_history(tmp_path):
    paths = emit_metrics(TrainHistory(), tmp_path, "train", None, 0)
    assert paths["csv"].read_text().count("\n") == 1
    assert json.loads(paths["json"].read_text())["manifold"] == "none"
    assert paths["svg"].exists()


def test_hundred_rows(tmp_path):
    rep = run_benchmark(rayleigh_problem(3, 0), Hyperparams(), 100)
    paths = emit_metrics(rep, tmp_path, "bench", "sphere", 0)
    lines = paths["csv"].read_text().splitlines()
    assert len(lines) == 101
    assert lines[1].startswith("1,") and lines[-1].startswith("100,")
    assert paths["svg"].read_text().lstrip().startswith("<?xml")


def test_filenames_do_not_collide(tmp_path):
    rep = run_benchmark(rayleigh_problem(3, 0), Hyperparams(), 5)
    a = emit_metrics(rep, tmp_path, "bench", "sphere", 1, plot=False)
    b = emit_metrics(rep, tmp_path, "bench", "sphere", 2, plot=False)
    assert a["csv"] != b["csv"] and a["csv"].exists() and b["csv"].exists()
    assert "bench" in a["csv"].name and "sphere" in a["csv"].name and "seed1" in a["csv"].name


def test_unwritable_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    rep = run_benchmark(rayleigh_problem(3, 0), Hyperparams(), 5)
    with pytest.raises(OSError):
        emit_metrics(rep, blocker / "sub", "bench", "sphere", 0)


# command line --------------------------------------------------------------

def test_check_passes(capsys):
    assert main(["--command", "check"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "17/17 checks passed" in out


def test_check_with_fault_fails(capsys):
    assert main(["--command", "check", "--inject-fault"]) != 0
    out = capsys.readouterr().out
    assert "closure sphere" in out and "FAIL" in out


def test_check_table_deterministic(capsys):
    main(["--command", "check", "--deterministic"])
    first = capsys.readouterr().out
    main(["--command", "check", "--deterministic"])
    assert capsys.readouterr().out == first


def test_config_echoed_to_log(tmp_path, caplog):
    caplog.set_level("INFO", logger="mksgd")
    main(["--command", "bench", "--manifold", "sphere", "--iters", "50", "--out", str(tmp_path),
          "--no-plot"])
    assert "effective config" in caplog.text and "theta_mu" in caplog.text
    echoed = tmp_path / "bench_sphere_seed0.config.yaml"
    assert parse_config(echoed) == parse_config(None, {"command": "bench", "manifold": "sphere",
                                                       "iters": 50, "out": str(tmp_path)})


@pytest.mark.parametrize("args", [
    ["--command", "bench", "--manifold", "stiefel", "--iters", "300"],
    ["--command", "bench", "--manifold", "oblique", "--iters", "300", "--seed", "4"],
    ["--command", "compare", "--manifold", "so", "--iters", "300"],
    ["--command", "train", "--manifold", "oblique", "--epochs", "2"],
    ["--command", "train", "--manifold", "none", "--epochs", "2"],
])
def test_outputs_byte_identical(tmp_path, args):
    for run in ("a", "b"):
        assert main(args + ["--out", str(tmp_path / run)]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert any(f.endswith(".csv") for f in files)
    for name in files:
        if name.endswith(".config.yaml"):
            continue  # holds the output directory itself
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_compare_writes_both_runs(tmp_path, capsys):
    main(["--command", "compare", "--manifold", "sphere", "--iters", "200", "--out", str(tmp_path),
          "--no-plot"])
    names = {p.name for p in tmp_path.iterdir()}
    assert {"compare_sphere_seed0_riemannian.csv", "compare_sphere_seed0_euclidean.csv"} <= names
    out = capsys.readouterr().out
    assert "[riemannian]" in out and "[euclidean]" in out


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"command": "bench", "manifold": "oblique", "iters": 100,
                                   "schedule": {"alpha0": 0.3}}))
    assert main(["--config", str(cfg), "--seed", "2", "--out", str(tmp_path), "--no-plot"]) == 0
    verdict = json.loads((tmp_path / "bench_oblique_seed2.json").read_text())
    assert verdict["iterations"] == 100 and verdict["problem"] == "oblique_diag"
    saved = yaml.safe_load((tmp_path / "bench_oblique_seed2.config.yaml").read_text())
    assert saved["schedule"]["alpha0"] == 0.3 and saved["seed"] == 2


def test_constant_schedule_from_cli(tmp_path):
    main(["--command", "bench", "--manifold", "sphere", "--iters", "100", "--schedule", "constant",
          "--out", str(tmp_path), "--no-plot"])
    verdict = json.loads((tmp_path / "bench_sphere_seed0.json").read_text())
    assert verdict["schedule_robbins_monro"] is False
    assert verdict["diagnostics"]["trend"] is None


def test_config_errors_exit_2(tmp_path, caplog):
    assert main(["--command", "bench", "--manifold", "stiefel", "--rows", "2", "--cols", "3"]) == 2
    assert "rows >= cols" in caplog.text
    bad = tmp_path / "bad.yaml"
    bad.write_text("bogus: 1\n")
    assert main(["--config", str(bad)]) == 2
    assert "bogus" in caplog.text


def test_module_entry_point(tmp_path):
    env = dict(os.environ, MKSGD_THREADS="1")
    proc = subprocess.run([sys.executable, "-m", "mksgd", "--command", "bench", "--iters", "20",
                           "--out", str(tmp_path), "--no-plot"],
                          capture_output=True, text=True, env=env, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert "effective config" in proc.stderr
