from __future__ import annotations

import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

import bmolab
from bmolab.cli import main, parse_int_list

DATA = Path(bmolab.__file__).parent / "data"


def run(*args):
    return subprocess.run([sys.executable, "-m", "bmolab.cli", *map(str, args)],
                          capture_output=True, text=True)


def single_error_line(proc, kind):
    lines = proc.stderr.strip().splitlines()
    assert len(lines) == 1 and lines[0].startswith(f"bmolab:error:{kind}: ")


def test_parse_int_list():
    assert parse_int_list("1,2,5") == [1, 2, 5]
    assert parse_int_list("3..6") == [3, 4, 5, 6]
    assert parse_int_list("1..1000:log4") == [1, 10, 100, 1000]
    assert len(parse_int_list("1..1000:log16")) == 16


def test_analyze_fix_b(tmp_path):
    out = tmp_path / "a.json"
    assert main(["--command", "analyze", "--input", str(DATA / "fix_b.json"),
                 "--output", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["bmo2"] == pytest.approx(0.6, abs=1e-15)
    assert d["condition_s"] == pytest.approx([0.4, 1.6], abs=1e-15)


def test_entropy_command(tmp_path):
    out = tmp_path / "e.json"
    assert main(["--command", "entropy", "--input", str(DATA / "fix_b.json"),
                 "--output", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["entropy"] == pytest.approx(0.192745, abs=1e-6)
    assert d["node_ids"] == [0, 1, 2]


def test_stability_outputs(tmp_path):
    out = tmp_path / "s.csv"
    args = ["--command", "stability", "--input", str(DATA / "fix_b_multiplicative.json"),
            "--n-list", "1..1000:log8", "--k-list", "1,2,3", "--output", str(out)]
    assert main(args) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    gaps = [float(r["u_gap"]) for r in rows]
    assert np.all(np.diff(gaps) < 0)
    summary = json.loads(out.with_suffix(".json").read_text())
    assert summary["header"]["skipped_n"] == [1] and summary["header"]["n_min"] == 2
    assert summary["rows"] == len(rows)
    assert summary["uniform_approximation"]["nonincreasing"]
    first_csv, first_json = out.read_bytes(), out.with_suffix(".json").read_bytes()
    assert main(args) == 0
    assert out.read_bytes() == first_csv
    assert out.with_suffix(".json").read_bytes() == first_json


def test_verify_input_market(tmp_path):
    out = tmp_path / "v.json"
    assert main(["--command", "verify", "--input", str(DATA / "fix_t.json"),
                 "--output", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["passed"] and d["header"]["bmolab_version"] == bmolab.__version__


def test_verify_failure_exit_code(tmp_path):
    # a tolerance below the solver's resolution makes the duality checks fail
    proc = run("--command", "verify", "--corpus-size", "5", "--tolerance", "1e-30",
               "--output", tmp_path / "v.json")
    assert proc.returncode == 1
    single_error_line(proc, "verify")


def test_input_errors(tmp_path):
    proc = run("--command", "analyze")
    assert proc.returncode == 2
    single_error_line(proc, "input")
    bad = tmp_path / "bad.json"
    d = json.loads((DATA / "fix_b.json").read_text())
    d["nodes"][2]["prob"] = 0.4
    bad.write_text(json.dumps(d))
    proc = run("--command", "entropy", "--input", bad)
    assert proc.returncode == 2
    single_error_line(proc, "input")
    assert "node 0" in proc.stderr
    proc = run("--command", "frobnicate")
    assert proc.returncode == 2
    single_error_line(proc, "input")
    proc = run("--command", "stability", "--input", DATA / "fix_b.json")
    assert proc.returncode == 2 and "family" in proc.stderr


def test_solver_error_exit_code(monkeypatch, capsys):
    import bmolab.cli as cli

    def boom(*_a, **_k):
        raise RuntimeError("inner solver\nfailed")

    monkeypatch.setattr(cli, "solve_exponential", boom)
    assert main(["--command", "entropy", "--input", str(DATA / "fix_b.json")]) == 3
    err = capsys.readouterr().err
    assert err == "bmolab:error:solver: inner solver failed\n"
