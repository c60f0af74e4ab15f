import subprocess
import sys

import pytest

from rcc.cli import main

SMALL = ["--dataset", "synthetic:n=40,d=4", "--iters", "15", "--T", "3"]

INVOCATIONS = {
    "train": ["train", *SMALL, "--method", "rcc"],
    "train-gs": ["train", *SMALL, "--method", "gs", "--samples", "20", "--burn-in", "2"],
    "gradcheck": ["gradcheck", "--classifier", "softmax", "--aggregator", "mode"],
    "sweep": ["sweep", *SMALL, "--method", "local,ica,gs,rcc", "--splits", "2",
              "--noise-levels", "0,0.5", "--lambda-grid", "0.01,1", "--samples", "20",
              "--burn-in", "2"],
    "cross-section": ["cross-section", *SMALL, "--alphas=-0.2:1.2:0.2"],
    "gen-graph": ["gen-synthetic", "--dataset", "synthetic:n=30"],
    "gen-images": ["gen-synthetic", "--kind", "images",
                   "--dataset", "synthetic-images:count=2,height=5,width=6"],
}


def run(argv, out):
    assert main([*argv, "--out", str(out)]) == 0
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.suffix != ".txt"
            or p.name == "params.txt"}


@pytest.mark.parametrize("name", INVOCATIONS)
def test_repeated_invocations_are_byte_identical(name, tmp_path):
    first = run(INVOCATIONS[name], tmp_path / "a")
    second = run(INVOCATIONS[name], tmp_path / "b")
    assert first and first == second


def test_train_then_predict(tmp_path, capsys):
    run(INVOCATIONS["train"], tmp_path / "m")
    argv = ["predict", *SMALL, "--method", "rcc", "--params", str(tmp_path / "m" / "params.txt"),
            "--out", str(tmp_path / "p")]
    assert main(argv) == 0
    lines = (tmp_path / "p" / "predictions.csv").read_text().splitlines()
    assert lines[0] == "node,label" and len(lines) == 41
    assert "accuracy" in capsys.readouterr().out


@pytest.mark.filterwarnings("ignore:.*outside")
def test_generated_dataset_loads_back(tmp_path):
    run(INVOCATIONS["gen-graph"], tmp_path / "g")
    prefix = tmp_path / "g" / "synthetic"
    out = tmp_path / "t"
    assert main(["train", "--dataset", f"citation:{prefix}", "--method", "local",
                 "--iters", "5", "--out", str(out)]) == 0
    run(INVOCATIONS["gen-images"], tmp_path / "im")
    assert main(["train", "--dataset", f"images:{tmp_path / 'im'}", "--method", "ica",
                 "--iters", "5", "--T", "2", "--out", str(tmp_path / "ti")]) == 0


def test_config_file_and_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\niters = 7\nmethod = local\ndataset = synthetic:n=30\n")
    out = tmp_path / "o"
    assert main(["train", "--config", str(cfg), "--iters", "9", "--out", str(out)]) == 0
    resolved = (out / "config.txt").read_text()
    assert "iters=9" in resolved and "method=local" in resolved and "backend=" in resolved
    assert len((out / "loss_history.csv").read_text().splitlines()) == 10


def test_record_time_fills_seconds(tmp_path):
    argv = ["sweep", *SMALL, "--method", "local", "--splits", "1", "--lambda-grid", "0.1",
            "--record-time", "--out", str(tmp_path)]
    assert main(argv) == 0
    row = (tmp_path / "results.csv").read_text().splitlines()[1]
    assert row.split(",")[-1] != ""


def test_errors_exit_with_code_two(tmp_path, capsys):
    assert main(["train", "--dataset", "citation:/nonexistent/x", "--out", str(tmp_path)]) == 2
    assert main(["sweep", "--noise-levels", "1.5", "--out", str(tmp_path)]) == 2
    assert "rcc: error" in capsys.readouterr().err


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rcc.cli", "--help"], capture_output=True,
                          text=True, check=True)
    assert "gradcheck" in proc.stdout
