"""
Tests for the command line: exit codes, overrides and output determinism
"""

import json

import pytest

from app import EXIT_CONFIG, EXIT_INVARIANT, EXIT_OK, EXIT_RUNTIME, main


def write_config(tmp_path, text: str, name: str = "run.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_gamma_probe_run_writes_outputs(tmp_path):
    cfg = write_config(tmp_path, "experiment=gamma-probe\nfunction=x\neps=1e-2,1e-3\n")
    out = tmp_path / "out"
    assert main(["gamma-probe", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert (out / "gamma_probe.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["experiment"] == "gamma-probe"
    assert manifest["config"] == cfg


def test_unknown_experiment_is_config_error(tmp_path, capsys):
    cfg = write_config(tmp_path, "experiment=fracture\n")
    assert main(["statics", "--config", cfg]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_malformed_config(tmp_path):
    cfg = write_config(tmp_path, "experiment=statics\nlambdas\n")
    assert main(["statics", "--config", cfg, "--out", str(tmp_path / "out")]) == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert main(["statics", "--config", str(tmp_path / "absent.cfg")]) == EXIT_CONFIG


def test_usage_errors_exit_with_config_status():
    with pytest.raises(SystemExit) as info:
        main(["fracture", "--config", "x.cfg"])
    assert info.value.code == EXIT_CONFIG


def test_invariant_violation_exit(tmp_path, capsys):
    cfg = write_config(tmp_path, "experiment=statics\neps=0.01\nlambdas=0.5\nperturbations=0\n"
                                 "global_check=0.5\nglobal_tol=1e-9\n")
    assert main(["statics", "--config", cfg, "--out", str(tmp_path / "out")]) == EXIT_INVARIANT
    assert "global minimum" in capsys.readouterr().err
    assert (tmp_path / "out" / "manifest.json").exists()


def test_runtime_error_exit(tmp_path):
    cfg = write_config(tmp_path, "experiment=longtime\nz0=5e-5\nT=0.001\n")
    assert main(["longtime", "--config", cfg, "--out", str(tmp_path / "out")]) == EXIT_RUNTIME


def test_dry_run_prints_materialized_config(tmp_path, capsys):
    cfg = write_config(tmp_path, "experiment=statics\neps=0.01\nlambdas=0:1:0.5\n")
    assert main(["statics", "--config", cfg, "--seed", "3", "--dry-run", "--out", str(tmp_path / "out")]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["parameters"]["lambdas"] == [0.0, 0.5, 1.0]
    assert data["parameters"]["n"] == 100
    assert data["seed"] == 3
    assert not (tmp_path / "out").exists()


def test_allow_unstable_only_for_dynamics(tmp_path):
    cfg = write_config(tmp_path, "experiment=gamma-probe\n")
    assert main(["gamma-probe", "--config", cfg, "--allow-unstable", "--dry-run"]) == EXIT_CONFIG


def test_sweep_config_needs_sweep_command(tmp_path):
    cfg = write_config(tmp_path, "experiment=gamma-probe\nsweep.axis=eps\nsweep.values=1e-2\n")
    assert main(["gamma-probe", "--config", cfg, "--dry-run"]) == EXIT_CONFIG
    plain = write_config(tmp_path, "experiment=gamma-probe\n", "plain.cfg")
    assert main(["sweep", "--config", plain, "--dry-run"]) == EXIT_CONFIG


def test_list(capsys):
    assert main(["list"]) == EXIT_OK
    assert "quasistatic" in capsys.readouterr().out


def test_outputs_are_byte_identical_across_runs(tmp_path):
    cfg = write_config(tmp_path, "experiment=statics\neps=0.01\nlambdas=0.5,1.5\nperturbations=50\nseed=11\n")
    for name in ("a", "b"):
        assert main(["statics", "--config", cfg, "--out", str(tmp_path / name)]) == EXIT_OK
    for table in ("branches.csv",):
        assert (tmp_path / "a" / table).read_bytes() == (tmp_path / "b" / table).read_bytes()
