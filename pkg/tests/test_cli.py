from __future__ import annotations

import subprocess
import sys

import pytest

from irs_ofdma.cli import EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_OK, main
from irs_ofdma.harness import parse_csv


def write(tmp_path, text: str, name: str = "exp.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


@pytest.mark.parametrize("N,M,L,k1,k2", [(16, 8, 4, 4, 10), (9, 3, 3, 3, 5)])
def test_limits(capsys, N, M, L, k1, k2):
    assert main(["limits", "--N", str(N), "--M", str(M), "--L", str(L)]) == EXIT_OK
    assert capsys.readouterr().out.split() == [f"K1={k1}", f"K2={k2}"]


def test_limits_invalid_arguments(capsys):
    assert main(["limits", "--N", "4", "--M", "1", "--L", "5"]) == EXIT_INVALID
    assert "error" in capsys.readouterr().err


def test_run_writes_csv(tmp_path, capsys):
    cfg = write(tmp_path, 'snr_db = [0, 10]\ntrials = 4')
    out = tmp_path / "out.csv"
    assert main(["run", cfg, "--out", str(out), "--seed", "3"]) == EXIT_OK
    reports = parse_csv(out.read_text())
    assert [r.snr_db for r in reports] == [0.0, 10.0]
    assert all(r.seed == 3 and r.trials == 4 for r in reports)


def test_run_to_stdout_with_overrides(tmp_path, capsys):
    cfg = write(tmp_path, "trials = 50")
    assert main(["run", cfg, "--trials", "2", "--threads", "2"]) == EXIT_OK
    (report,) = parse_csv(capsys.readouterr().out)
    assert report.trials == 2


def test_run_rejects_capacity_violation(tmp_path, capsys):
    cfg = write(tmp_path, 'scheme = "seuce"\nK = 11')
    assert main(["run", cfg]) == EXIT_INVALID
    assert "K2=10" in capsys.readouterr().err


@pytest.mark.parametrize("flag", [["--trials", "0"], ["--threads", "0"]])
def test_run_rejects_bad_overrides(tmp_path, flag):
    assert main(["run", write(tmp_path, ""), *flag]) == EXIT_INVALID


def test_missing_config_file(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.toml")]) == EXIT_INVALID
    assert "nope.toml" in capsys.readouterr().err


def test_run_invariant_suite(tmp_path, capsys):
    cfg = write(tmp_path, 'experiment = "invariant_suite"')
    assert main(["run", cfg]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)


def test_check_reports_feasibility(tmp_path, capsys):
    cfg = write(tmp_path, 'designs = ["equispaced:dft", "adjacent:dft"]')
    assert main(["check", cfg]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("PASS") == 2


def test_check_flags_infeasible_pilot_count(tmp_path, capsys):
    cfg = write(tmp_path, "pilots_per_user = 2")
    assert main(["check", cfg]) == EXIT_CHECK_FAILED
    assert "pilot_count" in capsys.readouterr().out


def test_search_p2_minimal_instance(tmp_path, capsys):
    cfg = write(tmp_path, 'experiment = "p2_search"\nscheme = "seuce"\nN = 4\nM = 1\n'
                          'M0 = 1\nL1 = 1\nL2 = 1\nLd = 1\nLcp = 0\nK = 2\np2_samples = 200')
    assert main(["search-p2", cfg, "--top", "2"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("9 feasible allocations")
    assert "two-step heuristic: rank" in out


def test_search_p2_too_large(tmp_path, capsys):
    cfg = write(tmp_path, 'experiment = "p2_search"\nscheme = "seuce"\nK = 2\np2_cap = 1000')
    assert main(["search-p2", cfg]) == EXIT_INVALID
    assert "exceed the cap" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "irs_ofdma", "limits", "--N", "16", "--M", "8", "--L", "4"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert proc.stdout.split() == ["K1=4", "K2=10"]
