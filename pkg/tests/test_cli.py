import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from gsparse.cli import main
from gsparse.data import SyntheticSpec, generate_synthetic, write_libsvm

SMALL = "m=40,n=100,k_active=3"


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--synthetic", SMALL, "--bogus"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_bad_synthetic_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--synthetic", "m=10,n=20,k_active=9"])
    assert exc.value.code == 2


def test_solve_libsvm_writes_report(tmp_path):
    X = np.random.default_rng(0).standard_normal((30, 5))
    data = tmp_path / "x.libsvm"
    write_libsvm(data, X, X[:, 0] * X[:, 1] + 0.1 * X[:, 2])
    out, plot = tmp_path / "report.json", tmp_path / "plot.csv"
    rc = main(["solve", "--data", str(data), "--p", "0.5", "--q", "2", "--lambda-frac", "0.01",
               "--strategy", "proposed", "--out", str(out), "--csv", str(plot)])
    assert rc == 0
    report = json.loads(out.read_text())
    assert report["report"]["strategy"] == "proposed"
    assert report["source"]["n"] == 50
    rows = list(csv.reader(plot.open()))
    assert rows[0] == ["iteration", "time_s", "screened", "repaired", "active_cols", "objective"]
    assert len(rows) == report["report"]["outer_iterations"] + 1


def test_compare_prints_table(tmp_path, capsys):
    out = tmp_path / "cmp.json"
    rc = main(["compare", "--synthetic", SMALL, "--seed", "7", "--out", str(out)])
    assert rc == 0
    text = capsys.readouterr().out
    assert "normalized" in text and "agreement" in text
    payload = json.loads(out.read_text())
    assert payload["status"] == "OK"
    assert payload["rows"][0]["normalized_time"] == 1.0


def test_gen_npz_and_solve(tmp_path, capsys):
    path = tmp_path / "inst.npz"
    assert main(["gen", "--synthetic", SMALL, "--seed", "2", "--out", str(path)]) == 0
    capsys.readouterr()
    A, y, x_true, _ = generate_synthetic(SyntheticSpec(m=40, n=100, k_active=3, seed=2))
    with np.load(path) as z:
        assert np.array_equal(z["A"], A) and np.array_equal(z["y"], y)
    assert main(["solve", "--data", str(path)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["support_recovered"]


def test_synthetic_config_file(tmp_path, capsys):
    cfg = tmp_path / "spec.txt"
    cfg.write_text("m=40\nn=100\nk_active=3\nseed=4\n")
    assert main(["metrics", "--synthetic-config", str(cfg), "--synthetic", "noise_std=0.05"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["source"]["synthetic"]["noise_std"] == 0.05
    assert payload["source"]["synthetic"]["seed"] == 4
    assert payload["rsn"][-1] == 1.0


def test_grid_and_gain(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("GSPARSE_THREADS", "2")
    assert main(["grid", "--synthetic", SMALL, "--Q", "3", "--csv", str(tmp_path / "g.csv")]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert len(payload["rows"]) == 3
    assert main(["gain", "--synthetic", SMALL, "--vary", "noise", "--values", "0.01,0.1"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert [r["value"] for r in payload["rows"]] == [0.01, 0.1]


def test_csv_needs_target(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,b,t\n1,2,3\n")
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--data", str(path)])
    assert exc.value.code == 2


def test_missing_file_is_error(tmp_path, capsys):
    assert main(["solve", "--data", str(tmp_path / "nope.libsvm")]) == 1
    assert "error" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gsparse", "solve", "--nope"], capture_output=True, text=True)
    assert proc.returncode == 2 and "usage" in proc.stderr
