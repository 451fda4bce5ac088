from __future__ import annotations

import json
import subprocess
import sys

import pytest

from sfl.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_cascade_never_ladder(capsys):
    code, out, _ = run(capsys, "cascade", "--eta", "0.1", "--depth", "5", "--schedule", "never")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "level,eta_prime,alpha,epsilon,t_minus,t_plus"
    primes = [float(line.split(",")[1]) for line in lines[1:]]
    assert primes == pytest.approx([1e-2, 1e-4, 1e-8, 1e-16, 1e-32], rel=1e-15)


def test_cascade_is_deterministic(capsys):
    argv = ("cascade", "--eta", "0.1", "--depth", "5", "--schedule", "from:2", "--seed", "42")
    first = run(capsys, *argv)
    second = run(capsys, *argv)
    assert first == second and first[0] == 0


def test_seed_from_environment(capsys, monkeypatch):
    argv = ("cascade", "--eta", "0.1", "--depth", "4", "--schedule", "from:2")
    monkeypatch.setenv("SFL_SEED", "42")
    from_env = run(capsys, *argv)[1]
    monkeypatch.delenv("SFL_SEED")
    assert run(capsys, *argv, "--seed", "42")[1] == from_env
    assert run(capsys, *argv, "--seed", "0")[1] != from_env


def test_cascade_bad_eta_is_a_domain_error(capsys):
    code, out, err = run(capsys, "cascade", "--eta", "1.5", "--depth", "3")
    assert code == 2 and out == "" and "eta out of range" in err


def test_precision_errors(capsys):
    code, _, err = run(capsys, "cascade", "--eta", "0.1", "--depth", "40")
    assert code == 3 and "exceeds" in err
    code, _, _ = run(capsys, "golden", "--precision", str(1 << 22))
    assert code == 3


def test_precision_is_raised_with_a_warning(capsys):
    code, out, err = run(capsys, "cascade", "--eta", "0.1", "--depth", "8")
    assert code == 0 and "precision raised" in err
    assert "warning" not in out


@pytest.mark.parametrize("argv", [
    (),
    ("frobnicate",),
    ("cascade", "--depth", "3"),
    ("cascade", "--eta", "abc", "--depth", "3"),
    ("cascade", "--eta", "0.1", "--depth", "3", "--schedule", "sometimes"),
    ("integrate", "--f", "nope"),
    ("picard", "--rhs", "selfsim", "--interval", "0.5"),
    ("dimension",),
    ("dimension", "--lambda", "0.5", "--cantor"),
    ("golden", "--iters", "0"),
    ("golden", "--jobs", "0"),
    ("golden", "--format", "xml"),
    ("golden", "--precision", "8"),
])
def test_usage_errors(capsys, argv):
    assert run(capsys, *argv)[0] == 64


def test_bad_env_seed_is_a_usage_error(capsys, monkeypatch):
    monkeypatch.setenv("SFL_SEED", "many")
    assert run(capsys, "golden")[0] == 64


def test_integrate_plain_integral(capsys):
    code, out, _ = run(capsys, "integrate", "--f", "one", "--epsilon", "0", "--a", "0", "--b", "1")
    data = json.loads(out)
    assert code == 0 and data["schema_version"] == 1
    assert abs(float(data["total"]) - 1) < 1e-60


def test_integrate_correction_terms(capsys):
    code, out, _ = run(capsys, "integrate", "--f", "one", "--epsilon", "0.01", "--eta", "0.1",
                       "--depth", "3")
    data = json.loads(out)
    assert code == 0 and len(data["correction_terms"]) == 3
    code, out, _ = run(capsys, "integrate", "--f", "recip", "--a", "0.5", "--b", "0.9",
                       "--format", "csv")
    assert code == 0 and out.splitlines()[0] == "quantity,value"


def test_picard_selfsim(capsys):
    code, out, err = run(capsys, "picard", "--rhs", "selfsim", "--tol", "1e-8",
                         "--interval", "-0.5:0.5")
    data = json.loads(out)
    assert code == 0 and data["converged"] is True and "converged=true" in err
    assert float(data["ln_t_grid"][-1]) == 0.5
    assert abs(2.718281828459045 ** float(data["ln_tau_final"][-1]) - 2) < 1e-8


def test_picard_unit_is_fast(capsys):
    code, out, _ = run(capsys, "picard", "--rhs", "unit")
    data = json.loads(out)
    assert code == 0 and data["converged"] and data["iterations_used"] <= 2


def test_picard_near_pole_reports_cleanly(capsys):
    code, out, err = run(capsys, "picard", "--rhs", "selfsim", "--interval", "-0.99:0.99")
    data = json.loads(out)
    assert code == 0 and data["converged"] is False and "converged=false" in err


def test_picard_extended_and_csv(capsys):
    code, out, _ = run(capsys, "picard", "--rhs", "unit", "--epsilon", "1e-4", "--grid-size",
                       "17", "--format", "csv")
    assert code == 0 and out.splitlines()[0] == "t,ln_tau_final,tau_final"


def test_picard_bad_interval_is_a_domain_error(capsys):
    assert run(capsys, "picard", "--rhs", "unit", "--interval", "0.1:0.5")[0] == 2


def test_dimension_modes(capsys):
    code, out, _ = run(capsys, "dimension", "--lambda", "0.5")
    assert code == 0 and out.splitlines() == ["lambda,sigma", "0.5,2.0"]
    assert run(capsys, "dimension", "--lambda", "1")[0] == 2
    code, out, _ = run(capsys, "dimension", "--cantor", "--epsilon", "0.25", "--depth", "3",
                       "--delta", "0.25")
    assert code == 0 and out.splitlines()[0] == "level,scale,count"
    assert len(out.splitlines()) == 5
    code, out, _ = run(capsys, "dimension", "--t", "10", "--epsilon-phi", "0.1",
                       "--format", "json")
    assert code == 0 and abs(float(json.loads(out)["sigma_local"]) - 1.0414) < 1e-4
    code, _, err = run(capsys, "dimension", "--cantor", "--epsilon", "0.25", "--depth", "1")
    assert code == 2 and "scales" in err


def test_golden(capsys):
    code, out, _ = run(capsys, "golden", "--iters", "40")
    value = out.splitlines()[1].split(",")[1]
    assert code == 0 and value.startswith("0.618033988749894")
    code, out, _ = run(capsys, "golden", "--format", "json")
    assert json.loads(out)["schema_version"] == 1


def test_output_file(capsys, tmp_path):
    target = tmp_path / "g.csv"
    code, out, _ = run(capsys, "golden", "--output", str(target))
    assert code == 0 and out == ""
    assert target.read_text().startswith("iterations,value")


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("eta = 0.1\ndepth = 4\nschedule = from:2\npin-epsilon = true\n")
    code, out, _ = run(capsys, "cascade", "--config", str(cfg))
    assert code == 0 and len(out.splitlines()) == 5
    code, out, _ = run(capsys, "cascade", "--config", str(cfg), "--depth", "2", "--eta", "0.2")
    rows = out.splitlines()
    assert code == 0 and len(rows) == 3 and rows[1].split(",")[1] == "0.04"
    mode = tmp_path / "mode.cfg"
    mode.write_text("lambda = 0.5\n")
    code, out, _ = run(capsys, "dimension", "--config", str(mode))
    assert code == 0 and out.splitlines()[1] == "0.5,2.0"
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert run(capsys, "golden", "--config", str(bad))[0] == 64
    assert run(capsys, "golden", "--config", str(tmp_path / "missing.cfg"))[0] == 64


def test_sweep_is_ordered_and_job_independent(capsys):
    argv = ("cascade", "--eta", "0.1", "--eta", "0.2", "--eta", "0.05", "--depth", "3",
            "--schedule", "from:2", "--seed", "7")
    serial = run(capsys, *argv)
    parallel = run(capsys, *argv, "--jobs", "3")
    assert serial == parallel and serial[0] == 0
    rows = serial[1].splitlines()
    assert rows[0].startswith("task,") and [r.split(",")[0] for r in rows[1:]] == \
        ["0"] * 3 + ["1"] * 3 + ["2"] * 3
    code, out, _ = run(capsys, *argv, "--format", "json")
    assert [r["eta"] for r in json.loads(out)["runs"]] == ["0.1", "0.2", "0.05"]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sfl", "golden", "--iters", "2"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[1].startswith("2,0.666666")
