"""Command-line behavior: exit codes, CSV artifacts, stdout contracts."""

import json
import subprocess
import sys

import numpy as np

from mshelm import cli, problems
from mshelm.linalg import SolverError


def write_config(tmp_path, **overrides):
    doc = {
        "problem": {"recipe": "constant", "k": 4.0},
        "nH": 4,
        "refine": 4,
        "m_list": [1, 2],
        "methods": ["petrov"],
    }
    doc.update(overrides)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(doc))
    return path


def test_run_success(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "results"
    code = cli.main(["run", "--config", str(cfg), "--out", str(out)])
    assert code == 0
    captured = capsys.readouterr()
    assert "wrote" in captured.out
    csv_path = out / "constant_sweep.csv"
    assert csv_path.exists()
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == problems.CSV_COLUMNS
    assert len(lines) == 3


def test_run_bad_config_exits_1(tmp_path, capsys):
    cfg = write_config(tmp_path, methods=["collocation"])
    code = cli.main(["run", "--config", str(cfg)])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_missing_argument_exits_1(capsys):
    assert cli.main(["run"]) == 1
    assert cli.main(["bogus-command"]) == 1


def test_numerical_failure_exits_2(tmp_path, capsys, monkeypatch):
    def boom(cfg):
        raise SolverError("synthetic breakdown")

    monkeypatch.setattr(cli.problems, "run_sweep", boom)
    cfg = write_config(tmp_path)
    code = cli.main(["run", "--config", str(cfg)])
    assert code == 2
    assert "numerical failure" in capsys.readouterr().err


def test_spectrum_stdout_and_file(tmp_path, capsys):
    cfg = write_config(tmp_path, refine=8)
    code = cli.main(["spectrum", "--config", str(cfg), "--edge", "5"])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "j,lambda"
    vals = [float(l.split(",")[1]) for l in lines[1:]]
    assert len(vals) == 7
    assert np.all(np.diff(vals) <= 0.0)
    out = tmp_path / "spec.csv"
    code = cli.main(["spectrum", "--config", str(cfg), "--edge", "5",
                     "--out", str(out)])
    assert code == 0
    assert out.read_text().splitlines()[0] == "j,lambda"


def test_spectrum_bad_edge_exits_1(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert cli.main(["spectrum", "--config", str(cfg), "--edge", "999"]) == 1


def test_reference_reports(tmp_path, capsys):
    cfg = write_config(tmp_path, refine=8)
    code = cli.main(["reference", "--config", str(cfg)])
    assert code == 0
    out = capsys.readouterr().out
    assert "e_L2" in out and ("PASS" in out or "FAIL" in out)


def test_describe_reports(tmp_path, capsys):
    cfg = write_config(tmp_path)
    code = cli.main(["describe", "--config", str(cfg)])
    assert code == 0
    out = capsys.readouterr().out
    assert "problem" in out
    assert "kH" in out
    assert "H bound" in out


def test_console_script_entry(tmp_path):
    cfg = write_config(tmp_path)
    proc = subprocess.run(
        [sys.executable, "-m", "mshelm.cli", "describe", "--config", str(cfg)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "problem" in proc.stdout
