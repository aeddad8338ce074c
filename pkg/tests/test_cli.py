import csv
import io
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from adiabatic_sw import lattice as lt
from adiabatic_sw.cli import cli_main


def run(capsys, *argv):
    code = cli_main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_classify_table(capsys):
    code, out, _ = run(capsys, "classify", "--genus", "2", "--ell", "5")
    assert code == 0
    rows = json.loads(out)
    assert [r["k"] for r in rows] == [0, 1, 2, 3, 4]
    assert rows[2]["kind"] == "ReducibleOnly"


def test_classify_csv_and_single_class(capsys):
    code, out, _ = run(capsys, "classify", "--genus", "2", "--ell", "4", "--k", "3", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 1
    assert rows[0]["component"] == "beta" and rows[0]["norm_sq"] == "2"


@pytest.mark.parametrize("argv", [["classify", "--genus", "2", "--ell", "5", "--bogus"],
                                  ["classify", "--genus", "2", "--ell", "5", "--quick"],
                                  ["classify", "--genus", "0", "--ell", "5"],
                                  ["nonsense"], ["spectrum", "--threads", "0"],
                                  ["spectrum", "--ell", "2", "--n", "5"],
                                  ["verify", "--criteria", "11"]])
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and err


def test_invariants_csv(capsys):
    code, out, _ = run(capsys, "invariants", "--ell", "1", "3", "--deltas", "1", "4", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 4
    assert all(r["identities_hold"] == "True" for r in rows)


def test_spectrum_dbar(capsys):
    code, out, _ = run(capsys, "spectrum", "--operator", "dbar", "--n", "6", "--degree", "2", "-k", "4",
                       "--tol", "1e-9")
    rep = json.loads(out)
    assert code == 0
    # two holomorphic sections; the Wilson term lifts them by O(h) only
    small = [e for e in rep["eigenvalues"] if abs(e) < 1.0]
    assert len(small) == 2


def test_spectrum_writes_files(capsys, tmp_path):
    code, _, _ = run(capsys, "spectrum", "--ell", "1", "--n", "4", "--delta", "2", "-k", "4",
                     "--output", str(tmp_path), "--format", "csv")
    assert code == 0
    assert any(f.endswith(".csv") for f in os.listdir(tmp_path))
    rows = list(csv.DictReader(open(os.path.join(tmp_path, [f for f in os.listdir(tmp_path)
                                                           if f.endswith(".csv")][0]))))
    # lambda / 2 = -1/4 is the fourfold lowest eigenvalue on this grid
    assert all(abs(float(r["eigenvalue"]) + 0.25) < 1e-8 for r in rows)


def test_solve_writes_outputs(capsys, tmp_path):
    out = tmp_path / "run"
    code, _, _ = run(capsys, "solve", "--ell", "2", "--k", "1", "--n", "4", "--delta", "8",
                     "--start", "random:3", "--output", str(out), "--format", "csv")
    assert code == 0
    summary = json.loads((out / "solve.json").read_text())
    assert summary["converged"] and summary["reducible"]
    spec, fields = lt.load_snapshot(str(out / "configuration.bin"))
    assert spec.ell == 2 and fields["phi"].shape == (2, 8 * 4 * 4)
    lines = (out / "convergence.csv").read_text().splitlines()
    assert lines[0].startswith("iteration") and len(lines) == summary["iterations"] + 2


def test_solve_from_job_and_snapshot(capsys, tmp_path):
    lat = lt.build_lattice(lt.square_spec(4, ell=1, delta=2.0))
    snap = tmp_path / "start.json"
    lt.save_snapshot(str(snap), lat, {"phi": np.zeros((2, lat.size), complex), "a": np.zeros((3, lat.size))},
                     "json")
    job = {"bundle": {"ell": 1, "delta": 2.0}, "lattice": lat.spec.to_dict(), "start": str(snap)}
    path = tmp_path / "job.json"
    path.write_text(json.dumps(job))
    code, out, _ = run(capsys, "solve", str(path))
    assert code == 0 and json.loads(out)["iterations"] == 0
    job["params"] = {"not_a_param": 1}
    path.write_text(json.dumps(job))
    assert run(capsys, "solve", str(path))[0] == 2


def test_sweep_plan_file(capsys, tmp_path):
    plan = {"bundle": {"ell": 1}, "deltas": [2, 4, 8], "grids": [lt.square_spec(4, ell=1).to_dict()],
            "experiments": ["gap_sweep"], "seed": 1}
    path = tmp_path / "plan.json"
    path.write_text(json.dumps(plan))
    code, _, _ = run(capsys, "sweep", str(path), "--output", str(tmp_path / "out"), "--threads", "2")
    assert code == 0
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert len(rep["experiments"]["gap_sweep"]["rows"]) == 3
    (tmp_path / "bad.json").write_text("{}")
    assert run(capsys, "sweep", str(tmp_path / "bad.json"))[0] == 2


def test_verify_quick_subset(capsys):
    code, out, err = run(capsys, "verify", "--quick", "--criteria", "9", "10")
    payload = json.loads(out)
    assert code == 0 and payload["passed"]
    assert "criterion  9" in err and "criterion 10" in err


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "adiabatic_sw", "classify", "--genus", "1", "--ell", "3",
                        "--format", "csv"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.count("ReducibleOnly") == 3
