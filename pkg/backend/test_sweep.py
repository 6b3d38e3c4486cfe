"""
Tests for sweeps: per-point isolation, aggregation order and job-count independence
"""

import json
import shutil

import pytest

from app import EXIT_CONFIG, main
from config import parse_config
from experiments import get_experiment_manager
from outputs import read_csv
from sweep import PointOutcome, aggregate_rows, run_sweep

SWEEP = "experiment=gamma-probe\nfunction=x\nsweep.axis=eps\nsweep.values={values}\n"


def sweep_config(tmp_path, values: str, name: str):
    return parse_config(SWEEP.format(values=values), overrides={"output": str(tmp_path / name)})


def tree_bytes(root):
    """Every output file; point manifests lose only their wall_time_seconds"""
    tree = {}
    for p in sorted(root.rglob("*")):
        if not p.is_file():
            continue
        data = p.read_bytes()
        if p.name == "manifest.json":
            manifest = json.loads(data)
            assert manifest.pop("wall_time_seconds") >= 0.0
            data = json.dumps(manifest, sort_keys=True).encode()
        tree[p.relative_to(root).as_posix()] = data
    return tree


def test_jobs_do_not_change_output_bytes(tmp_path):
    config = sweep_config(tmp_path, "1e-3,1e-2,1e-4", "s")
    serial = run_sweep(config, jobs=1)
    first = tree_bytes(tmp_path / "s")
    shutil.rmtree(tmp_path / "s")
    parallel = run_sweep(config, jobs=8)
    assert serial.exit_code == parallel.exit_code == 0
    second = tree_bytes(tmp_path / "s")
    assert "sweep.json" in first and "point-001/manifest.json" in first
    assert first == second
    assert "jobs" not in json.loads(second["sweep.json"])


def test_aggregate_is_sorted_by_axis(tmp_path):
    run_sweep(sweep_config(tmp_path, "1e-3,1e-2,1e-4", "s"), jobs=2)
    header, rows = read_csv(tmp_path / "s" / "aggregate.csv")
    assert header[:3] == ["eps", "point", "status"]
    assert [float(r[0]) for r in rows] == [1e-4, 1e-3, 1e-2]
    assert [r[1] for r in rows] == ["point-002", "point-000", "point-001"]


def test_point_matches_single_run(tmp_path):
    run_sweep(sweep_config(tmp_path, "1e-2,1e-3", "s"), jobs=1)
    cfg = parse_config("experiment=gamma-probe\nfunction=x\neps=1e-3\n", overrides={"output": str(tmp_path / "solo")})
    get_experiment_manager().execute(cfg.experiment, cfg.params, cfg.output, cfg.seed)
    assert (tmp_path / "s" / "point-001" / "gamma_probe.csv").read_bytes() == \
        (tmp_path / "solo" / "gamma_probe.csv").read_bytes()


def test_failed_point_keeps_the_others(tmp_path):
    report = run_sweep(sweep_config(tmp_path, "1e-2,0.3,1e-3", "s"), jobs=2)
    assert report.exit_code == 3
    assert [o.index for o in report.failed] == [1]
    assert "InvalidSpacingError" in report.failed[0].error
    manifest = json.loads((tmp_path / "s" / "sweep.json").read_text())
    assert manifest["completed"] == [0, 2]
    assert manifest["failed"][0]["value"] == 0.3
    assert (tmp_path / "s" / "point-000" / "gamma_probe.csv").exists()
    assert (tmp_path / "s" / "point-002" / "gamma_probe.csv").exists()
    header, rows = read_csv(tmp_path / "s" / "aggregate.csv")
    assert [r[2] for r in rows] == ["ok", "ok", "failed"]


def test_invariant_violation_status():
    outcomes = [PointOutcome(0, 0.5, "ok", {"gap": 0.1}), PointOutcome(1, 1.5, "invariant-violation", invariant="x")]
    header, rows = aggregate_rows("lambdas", outcomes)
    assert header == ["lambdas", "point", "status", "gap"]
    assert rows[1] == [1.5, "point-001", "invariant-violation", None]


def test_empty_sweep_is_config_error(tmp_path):
    path = tmp_path / "empty.cfg"
    path.write_text("experiment=gamma-probe\nsweep.axis=eps\nsweep.values=\n", encoding="utf-8")
    assert main(["sweep", "--config", str(path)]) == EXIT_CONFIG


def test_run_sweep_rejects_plain_config(tmp_path):
    cfg = parse_config("experiment=gamma-probe\n", overrides={"output": str(tmp_path)})
    with pytest.raises(ValueError):
        run_sweep(cfg)
