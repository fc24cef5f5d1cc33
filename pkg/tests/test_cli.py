import csv
import io
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from cavitymech import cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(capsys, *argv):
    rc = cli.main(list(argv))
    out, err = capsys.readouterr()
    return rc, out, err


def cfg(name):
    return str(CONFIGS / name)


def write_cfg(tmp_path, data, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


# --- quantities --------------------------------------------------------------------------

def test_quantities_text_report(capsys):
    rc, out, _ = run(capsys, "quantities", "--config", cfg("quantities_reference.json"))
    assert rc == 0
    assert "104.2" in out and "≈ 100" in out
    assert "0.0164" in out
    assert "kHz/pm" in out


def test_quantities_empty_config_reports_missing(capsys):
    rc, out, _ = run(capsys, "quantities", "--config", cfg("empty.json"))
    assert rc == 0
    assert "n/a" in out


def test_quantities_json(capsys):
    rc, out, _ = run(capsys, "quantities", "--config", cfg("quantities_reference.json"), "--format", "json")
    assert rc == 0
    rows = json.loads(out)
    assert rows


# --- design and outputs -------------------------------------------------------------

def test_design_json(capsys):
    rc, out, _ = run(capsys, "design", "--config", cfg("design_1GPa.json"))
    assert rc == 0
    rep = json.loads(out)
    assert rep["f1_Hz"] == pytest.approx(2.887e6, rel=0.01)
    assert rep["quantum_enabled"] is False


def test_design_stress_sweep_csv(capsys):
    rc, out, _ = run(capsys, "design", "--config", cfg("design_1GPa.json"), "--format", "csv")
    assert rc == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["stress_Pa", "f1_Hz"]
    assert len(rows) == 6


@pytest.mark.parametrize("command", ["cool", "sweep", "spectrum"])
def test_csv_outputs_have_headers(capsys, command):
    rc, out, _ = run(capsys, command, "--config", cfg("cool.json"), "--format", "csv")
    assert rc == 0
    header = out.splitlines()[0]
    assert header and not header[0].isdigit()
    assert len(out.splitlines()) >= 2


def test_reruns_are_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for target in (a, b):
        assert cli.main(["optimize", "--config", cfg("cool.json"), "--out", str(target), "--seed", "7"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(a.read_text())["feasible"] is True


def test_failed_write_leaves_nothing_behind(tmp_path, monkeypatch, capsys):
    target = tmp_path / "report.json"

    def refuse(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(cli.os, "replace", refuse)
    rc, _, err = run(capsys, "design", "--config", cfg("design_1GPa.json"), "--out", str(target))
    assert rc == 1 and "disk full" in err
    assert list(tmp_path.iterdir()) == []


def test_existing_output_survives_failed_run(tmp_path, capsys):
    target = tmp_path / "report.json"
    target.write_text("previous")
    rc, _, _ = run(capsys, "design", "--config", cfg("bad_suffix.json"), "--out", str(target))
    assert rc == 1
    assert target.read_text() == "previous"
    assert [p.name for p in tmp_path.iterdir()] == ["report.json"]


# --- errors and exit codes -------------------------------------------------------------

def test_unit_suffix_is_required(capsys):
    rc, _, err = run(capsys, "quantities", "--config", cfg("bad_suffix.json"))
    assert rc == 1
    assert "mech.omega_m" in err and "omega_m_Hz" in err


def test_unknown_key_rejected(tmp_path, capsys):
    path = write_cfg(tmp_path, {"mech": {"omega_m_Hz": 1e7, "gamma_m_Hz": 1.0, "mass_kg": 1e-15,
                                         "T_bath_K": 0.05, "colour": "red"}})
    rc, _, err = run(capsys, "cool", "--config", path)
    assert rc == 1 and "colour" in err


def test_missing_config_file(capsys):
    rc, _, err = run(capsys, "cool", "--config", "/nonexistent/config.json")
    assert rc == 1 and err.startswith("error:")


def test_unstable_drive_exits_2(tmp_path, capsys):
    data = json.loads((CONFIGS / "cool.json").read_text())
    data["cavities"][0]["detuning_Hz"] = -10e6
    data["cavities"][0]["n_photons"] = 1e6
    rc, out, _ = run(capsys, "cool", "--config", write_cfg(tmp_path, data))
    assert rc == 2
    assert json.loads(out)["stable"] is False


def test_infeasible_optimization_exits_2(tmp_path, capsys):
    data = json.loads((CONFIGS / "cool.json").read_text())
    # every photon number in the box pushes Gamma past the bistability margin
    data["optimize"]["n_photons"] = [1e14, 1e15]
    rc, out, _ = run(capsys, "optimize", "--config", write_cfg(tmp_path, data))
    assert rc == 2
    assert json.loads(out)["feasible"] is False


def test_transfer_command(capsys):
    rc, out, _ = run(capsys, "transfer", "--config", cfg("transfer.json"))
    res = json.loads(out)
    assert rc == 0
    assert res["fidelity"] > 0.99
    assert res["feasibility"]["passed"] is True


@pytest.mark.slow
def test_oracle_check_passes(capsys):
    rc, _, err = run(capsys, "oracle-check", "--config", cfg("empty.json"))
    assert rc == 0
    assert err.count("PASS") == 3 and "FAIL" not in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cavitymech", "design", "--config", cfg("design_1GPa.json")],
                          capture_output=True, text=True, check=False, env={**os.environ})
    assert proc.returncode == 0, proc.stderr
    assert "f1_Hz" in proc.stdout
