"""
PM-Lab Sweeps
Runs every point of a sweep as an independent task in a process pool. Each point
writes only its own point-XXX/ directory; aggregate.csv is written after all
points finish, sorted by axis value, so output bytes do not depend on --jobs.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from config import ExperimentConfig
from errors import InvariantViolation, PMLabError
from experiments import get_experiment_manager
from outputs import write_csv, write_manifest

logger = logging.getLogger(__name__)


@dataclass
class PointOutcome:
    index: int
    value: Any
    status: str
    summary: Dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None
    invariant: Optional[str] = None


@dataclass
class SweepReport:
    axis: str
    outcomes: List[PointOutcome]
    out_dir: Path

    @property
    def failed(self) -> List[PointOutcome]:
        return [o for o in self.outcomes if o.status != "ok"]

    @property
    def exit_code(self) -> int:
        if not self.failed:
            return 0
        return 2 if any(o.status == "invariant-violation" for o in self.failed) else 3


def point_dir(out_dir: Path, index: int) -> Path:
    return Path(out_dir) / f"point-{index:03d}"


def run_point(config: ExperimentConfig, index: int, value: Any) -> PointOutcome:
    """Execute one sweep point; failures are reported, not raised"""
    point = config.point(value, point_dir(config.output, index))
    manager = get_experiment_manager()
    try:
        result = manager.execute(point.experiment, point.params, point.output, point.seed,
                                 extra={"sweep": {"axis": config.sweep_axis, "value": value, "index": index}})
    except InvariantViolation as e:
        return PointOutcome(index, value, "invariant-violation", error=str(e), invariant=e.invariant)
    except (PMLabError, ValueError) as e:
        logger.error(f"❌ Sweep point {index} ({config.sweep_axis}={value}) failed: {e}")
        return PointOutcome(index, value, "failed", error=f"{type(e).__name__}: {e}")
    return PointOutcome(index, value, "ok", summary=result.summary)


def _sort_key(outcome: PointOutcome):
    value = outcome.value
    return (0, value, outcome.index) if isinstance(value, (int, float)) else (1, str(value), outcome.index)


def aggregate_rows(axis: str, outcomes: List[PointOutcome]):
    """Header and rows sorted by axis value; summary keys in first-seen order"""
    ordered = sorted(outcomes, key=_sort_key)
    keys: List[str] = []
    for o in ordered:
        keys.extend(k for k in o.summary if k not in keys and k != axis)
    header = [axis, "point", "status", *keys]
    rows = [[o.value, f"point-{o.index:03d}", o.status, *(o.summary.get(k) for k in keys)] for o in ordered]
    return header, rows


def run_sweep(config: ExperimentConfig, jobs: int = 1) -> SweepReport:
    """Run all points with at most `jobs` workers, then write aggregate.csv and sweep.json"""
    if not config.is_sweep:
        raise ValueError("config declares no sweep")
    jobs = max(1, int(jobs))
    out_dir = Path(config.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    logger.info(f"🧮 Sweep over {config.sweep_axis}: {len(config.sweep_values)} points, {jobs} jobs")

    points = list(enumerate(config.sweep_values))
    if jobs == 1:
        outcomes = [run_point(config, i, v) for i, v in points]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_point, config, i, v) for i, v in points]
            outcomes = [f.result() for f in futures]

    header, rows = aggregate_rows(config.sweep_axis, outcomes)
    write_csv(out_dir / "aggregate.csv", header, rows)
    report = SweepReport(axis=config.sweep_axis, outcomes=outcomes, out_dir=out_dir)
    write_manifest(out_dir / "sweep.json", {
        **config.materialized(),
        "completed": [o.index for o in outcomes if o.status == "ok"],
        "failed": [{"index": o.index, "value": o.value, "status": o.status, "error": o.error,
                    "invariant": o.invariant} for o in report.failed],
    })
    if report.failed:
        logger.error(f"❌ {len(report.failed)} of {len(outcomes)} sweep points failed")
    else:
        logger.info(f"✅ Sweep complete: {out_dir / 'aggregate.csv'}")
    return report
