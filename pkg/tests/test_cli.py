import csv
import json
import subprocess
import sys

import pytest
from click.testing import CliRunner

from charfront.cli import main

HEADER = "v,eta,theta_index,f,h,Fprime,Hprime,omega,digamma,sigma,detk_err"

LINEAR = """
pulse:
  psi: {kind: linear}
  T0: [1.0, 0.0]
grid: {nv: 33, neta: 33}
"""

ZERO = """
pulse:
  psi: zero
  T0: [1.0, 0.0]
grid: {nv: 9, neta: 9}
"""

BUMP = """
pulse:
  psi: {kind: bump, delta1: 0.05}
  T0: [[1.0, 0.0], [0.6, 0.3]]
grid: {eta_max: auto, nv: 512, neta: 1024, spacing: graded}
"""


def write(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run(*args):
    return CliRunner().invoke(main, list(args))


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_solve_writes_schema(tmp_path):
    out = tmp_path / "out"
    r = run("solve", "--config", write(tmp_path, LINEAR), "--out", str(out))
    assert r.exit_code == 0, r.output
    assert (out / "fields.csv").read_text().splitlines()[0] == HEADER
    summary = json.loads((out / "summary.json").read_text())
    assert summary["angles"][0]["detk_max_rel_err"] < 1e-4


def test_solve_corner_values(tmp_path):
    out = tmp_path / "out"
    run("solve", "--config", write(tmp_path, LINEAR), "--out", str(out))
    row = [r for r in read_rows(out / "fields.csv") if r["v"] == "1.0" and r["eta"] == "1.0"][0]
    assert float(row["digamma"]) == pytest.approx(3.0, abs=1e-12)
    assert float(row["f"]) == pytest.approx(-4 / 3, abs=1e-12)
    assert float(row["h"]) == pytest.approx(-4 / 3, abs=1e-12)


def test_solve_trivial_pulse(tmp_path):
    out = tmp_path / "out"
    assert run("solve", "--config", write(tmp_path, ZERO), "--out", str(out)).exit_code == 0
    for row in read_rows(out / "fields.csv"):
        for key in ("f", "h", "Fprime", "Hprime", "omega"):
            assert row[key] == "0.0"
        assert row["digamma"] == "4.0"


def test_solve_is_deterministic(tmp_path):
    cfg = write(tmp_path, LINEAR)
    run("solve", "--config", cfg, "--out", str(tmp_path / "a"))
    run("solve", "--config", cfg, "--out", str(tmp_path / "b"))
    assert (tmp_path / "a" / "fields.csv").read_bytes() == (tmp_path / "b" / "fields.csv").read_bytes()


def test_floats_round_trip(tmp_path):
    out = tmp_path / "out"
    run("solve", "--config", write(tmp_path, LINEAR), "--out", str(out))
    for row in read_rows(out / "fields.csv")[:200]:
        for key in ("f", "Hprime", "omega"):
            assert repr(float(row[key])) == row[key]


def test_malformed_config_exit_2_no_files(tmp_path):
    out = tmp_path / "out"
    r = run("solve", "--config", write(tmp_path, LINEAR.replace("nv: 33", "nv: 1")), "--out", str(out))
    assert r.exit_code == 2
    assert not out.exists()


def test_unknown_key_exit_2(tmp_path):
    out = tmp_path / "out"
    r = run("validate", "--config", write(tmp_path, LINEAR + "colour: blue\n"), "--out", str(out))
    assert r.exit_code == 2
    assert not out.exists()


def test_pipeline_error_exit_1(tmp_path):
    # F_min above the initial value of digamma leaves no admissible node
    cfg = write(tmp_path, LINEAR + "tolerances: {F_min: 4.5}\n")
    r = run("solve", "--config", cfg, "--out", str(tmp_path / "out"))
    assert r.exit_code == 1


def test_kretschmann_short_pulse(tmp_path):
    out = tmp_path / "out"
    r = run("kretschmann", "--config", write(tmp_path, BUMP), "--out", str(out))
    assert r.exit_code == 0, r.output
    rep = json.loads((out / "blowup.json").read_text())["angles"]
    assert len(rep) == 2
    for a in rep:
        assert a["criterion_pass"]
        assert abs(a["p_fit"] - a["p_pred"]) / a["p_pred"] <= 0.05
    rows = read_rows(out / "ktilde.csv")
    assert {r["theta_index"] for r in rows} == {"0", "1"}


def test_kretschmann_zero_energy_exit_1(tmp_path):
    r = run("kretschmann", "--config", write(tmp_path, ZERO), "--out", str(tmp_path / "out"))
    assert r.exit_code == 1
    assert "zero energy" in r.output


def test_kretschmann_injected_unit_eigenvalue(tmp_path):
    (tmp_path / "sig.csv").write_text("theta_index,sigma_prime\n0,1.0\n")
    cfg = write(tmp_path, BUMP + "kretschmann: {sigma_prime_file: sig.csv}\n")
    out = tmp_path / "out"
    r = run("kretschmann", "--config", cfg, "--out", str(out))
    assert r.exit_code == 0
    rep = json.loads((out / "blowup.json").read_text())["angles"]
    assert rep[0]["criterion_pass"] is False
    assert rep[0]["p_fit"] is None
    assert rep[1]["criterion_pass"] is True


def test_kernel_command(tmp_path):
    out = tmp_path / "out"
    r = run("kernel", "--config", write(tmp_path, LINEAR), "--out", str(out))
    assert r.exit_code == 0, r.output
    rep = json.loads((out / "kernel.json").read_text())["angles"][0]
    assert rep["rel_err_Ftprime"] < 1e-3 and rep["rel_err_Hprime"] < 1e-3
    assert rep["monitor"]["sup"] > 0


@pytest.mark.slow
def test_validate_degraded_tolerance_fails(tmp_path):
    cfg = write(tmp_path, LINEAR + "tolerances: {goursat_tol: 1.0}\n")
    out = tmp_path / "out"
    r = run("validate", "--config", cfg, "--out", str(out))
    assert r.exit_code == 1
    rep = json.loads((out / "report.json").read_text())
    assert not rep["checks"][0]["passed"]
    assert [c["number"] for c in rep["checks"]] == list(range(1, 13))


@pytest.mark.slow
def test_validate_empty_window_fails(tmp_path):
    cfg = write(tmp_path, LINEAR + "tolerances: {sigma_min: 0.05}\n")
    r = run("validate", "--config", cfg, "--out", str(tmp_path / "out"))
    assert r.exit_code == 1
    assert "InsufficientWindow" in r.output


def test_console_script_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "charfront.cli", "solve", "--config", write(tmp_path, ZERO),
                        "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "o" / "fields.csv").exists()
