import csv
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from smg.cli import main

FIXTURES = Path(__file__).parent / "fixtures"
QUAD = "synth:quadratic:n=30,dim=4,seed=0,condition=4"


def test_run_writes_trace(tmp_path, capsys):
    out = tmp_path / "r"
    assert main(["run", "--data", QUAD, "--epochs", "3", "--eta", "0.05", "--out", str(out)]) == 0
    lines = (tmp_path / "r.jsonl").read_text().splitlines()
    assert len(lines) == 4
    rec = json.loads(lines[0])
    assert set(rec) == {"t", "eta", "loss", "dist_sq", "time_ms"} and rec["t"] == 1
    assert "output_index" in json.loads(lines[-1])
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["t", "eta", "loss", "dist_sq", "time_ms"] and len(rows) == 4
    assert "final loss" in capsys.readouterr().out


@pytest.mark.parametrize("opt", ["ssgd", "sgdm", "adam", "sgd"])
def test_run_baselines(tmp_path, opt):
    args = ["run", "--optimizer", opt, "--data", QUAD, "--epochs", "2", "--lr", "0.001",
            "--out", str(tmp_path / opt)]
    assert main(args) == 0


def test_run_libsvm(tmp_path):
    assert main(["run", "--data", str(FIXTURES / "tiny.libsvm"), "--optimizer", "adam",
                 "--lr", "0.01", "--epochs", "2", "--out", str(tmp_path / "t")]) == 0


def test_errors_map_to_exit_2(tmp_path, capsys):
    assert main(["run", "--data", str(tmp_path / "nope"), "--optimizer", "sgd", "--lr", "0.1",
                 "--out", str(tmp_path / "x")]) == 2
    assert main(["verify", "--data", QUAD, "--eta", "10", "--epochs", "2", "--seeds", "2",
                 "--out", str(tmp_path / "v")]) == 2
    assert "error:" in capsys.readouterr().err


def test_verify(tmp_path):
    out = tmp_path / "v"
    assert main(["verify", "--data", QUAD, "--eta", "0.02", "--epochs", "4", "--seeds", "20",
                 "--w0-offset", "1", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "checks.csv")))
    assert {r["inequality"] for r in rows} >= {"lemma1", "B0", "sumB", "theorem2"}
    assert all(r["ok"] == "true" for r in rows)


def test_rate_fit(tmp_path, capsys):
    table = tmp_path / "t.csv"
    T = np.array([16, 32, 64, 128])
    table.write_text("T,metric\n" + "".join(f"{t},{float(2 * t ** -0.5)!r}\n" for t in T))
    assert main(["rate-fit", str(table), "--expect", "-0.6", "-0.4"]) == 0
    assert "slope -0.500000" in capsys.readouterr().out
    assert main(["rate-fit", str(table), "--expect", "-2", "-1"]) == 1
    assert main(["rate-fit", str(table), "--log-correction"]) == 2


def test_solve_opt(tmp_path, capsys):
    data = tmp_path / "d.libsvm"
    shutil.copy(FIXTURES / "tiny.libsvm", data)
    assert main(["solve-opt", "--data", str(data), "--l2", "0.1"]) == 0
    assert Path(str(data) + ".wstar.npy").exists()
    assert "cached in" in capsys.readouterr().out


def test_grid(tmp_path):
    cfg = {"problem": {"kind": "synth_logistic", "n": 40, "dim": 3, "holdout": 0.25},
           "optimizers": [{"name": "smg", "beta": 0.5, "lrs": [0.1, 0.01]},
                          {"name": "adam", "lrs": [0.01]}],
           "seeds": [0, 1], "epochs": 3, "feasibility": "off"}
    path = tmp_path / "g.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    assert main(["grid", str(path), "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"grid.csv", "smg.csv", "adam.csv", "summary.txt"}
    first = (out / "smg.csv").read_bytes()
    assert main(["grid", str(path), "--out", str(out), "--workers", "2"]) == 0
    assert (out / "smg.csv").read_bytes() == first
