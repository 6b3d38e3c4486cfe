"""
PM-Lab Experiments
Registry of runnable experiments; each module in this package defines one
`Experiment` class that turns validated parameters into CSV tables.
"""

import importlib
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type

from pydantic import BaseModel, ConfigDict

from errors import ConfigError, InvariantViolation
from interpolation import MAX_SPACING, thresholds
from outputs import write_csv, write_manifest
from settings import get_settings

logger = logging.getLogger(__name__)


class ExperimentParams(BaseModel):
    """Base for per-experiment parameter models; unknown keys are errors"""

    model_config = ConfigDict(extra="forbid")


@dataclass
class RunContext:
    out_dir: Path
    seed: int


@dataclass
class ExperimentResult:
    """
    tables: file name -> (header, rows), written as CSV in insertion order
    summary: flat scalars, one aggregate row per sweep point
    checks: named invariants; any False fails the run with exit status 2
    details: extra manifest entries (thresholds, solver settings, reports)
    """

    tables: Dict[str, Tuple[List[str], List[Sequence[Any]]]] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)
    checks: Dict[str, bool] = field(default_factory=dict)
    details: Dict[str, Any] = field(default_factory=dict)

    def add_table(self, name: str, header: Sequence[str], rows: List[Sequence[Any]]) -> None:
        self.tables[name] = (list(header), rows)

    def add_dict_table(self, name: str, rows: List[Dict[str, Any]], header: Sequence[str] = ()) -> None:
        header = list(header) or (list(rows[0].keys()) if rows else [])
        self.add_table(name, header, [[row.get(col) for col in header] for row in rows])


class Experiment:
    """Base class for all experiments"""

    name = "base"
    version = "1.0.0"
    description = "Base experiment class"
    params_model: Type[ExperimentParams] = ExperimentParams

    def run(self, params: ExperimentParams, ctx: RunContext) -> ExperimentResult:
        raise NotImplementedError("Experiments must implement run()")


class ExperimentManager:
    """Discovers and executes experiments"""

    def __init__(self, package_dir: Optional[Path] = None):
        self.package_dir = Path(package_dir or Path(__file__).parent)
        self.experiments: Dict[str, Experiment] = {}
        self.experiment_metadata: Dict[str, Dict[str, Any]] = {}

    def load_experiments(self) -> None:
        """Import every module of the package and register its Experiment"""
        for module_file in sorted(self.package_dir.glob("*.py")):
            if module_file.name.startswith("_"):
                continue
            self._load_experiment(module_file)

    def _load_experiment(self, module_file: Path) -> None:
        try:
            module = importlib.import_module(f"{__name__}.{module_file.stem}")
        except Exception as e:
            logger.error(f"Error loading experiment {module_file.name}: {e}")
            raise

        if not hasattr(module, "Experiment"):
            logger.debug(f"{module_file.name} defines no experiment")
            return
        instance = getattr(module, "Experiment")()
        self.experiments[instance.name] = instance
        self.experiment_metadata[instance.name] = {
            "name": instance.name,
            "version": instance.version,
            "description": instance.description,
            "parameters": sorted(instance.params_model.model_fields),
        }
        logger.debug(f"Loaded experiment: {instance.name} v{instance.version}")

    def get(self, name: str) -> Experiment:
        if name not in self.experiments:
            raise ConfigError(f"unknown experiment '{name}' (known: {', '.join(sorted(self.experiments))})",
                              key="experiment")
        return self.experiments[name]

    def list_experiments(self) -> List[Dict[str, Any]]:
        return [self.experiment_metadata[name] for name in sorted(self.experiment_metadata)]

    def execute(self, name: str, params: ExperimentParams, out_dir: Path, seed: int,
                extra: Optional[Dict[str, Any]] = None) -> ExperimentResult:
        """
        Run one experiment, write its CSV tables and manifest.json into out_dir,
        then raise InvariantViolation if any named check failed.
        """
        experiment = self.get(name)
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        logger.info(f"🚀 Running {name} into {out_dir}")

        started = time.perf_counter()
        result = experiment.run(params, RunContext(out_dir=out_dir, seed=seed))
        wall = time.perf_counter() - started

        for table, (header, rows) in result.tables.items():
            write_csv(out_dir / table, header, rows)

        failed = [check for check, ok in result.checks.items() if not ok]
        write_manifest(out_dir / "manifest.json", {
            "experiment": name,
            "version": experiment.version,
            "seed": seed,
            "parameters": params.model_dump(),
            "settings": get_settings().model_dump(),
            "tables": list(result.tables),
            "summary": result.summary,
            "checks": result.checks,
            "details": result.details,
            "status": "invariant-violation" if failed else "ok",
            "wall_time_seconds": wall,
            **(extra or {}),
        })

        if failed:
            logger.error(f"❌ {name}: invariant '{failed[0]}' failed")
            raise InvariantViolation(failed[0], {"failed_checks": failed, "out_dir": str(out_dir)})
        logger.info(f"✅ {name} finished in {wall:.2f}s ({len(result.tables)} tables)")
        return result


# Global experiment manager
experiment_manager: Optional[ExperimentManager] = None


def get_experiment_manager() -> ExperimentManager:
    """Get or create the global experiment manager"""
    global experiment_manager
    if experiment_manager is None:
        experiment_manager = ExperimentManager()
        experiment_manager.load_experiments()
    return experiment_manager


def threshold_details(eps: float) -> Dict[str, Any]:
    """p(eps), b, c and the jump threshold for the manifest (empty above the thresholds' range)"""
    if not 0.0 < eps <= MAX_SPACING:
        return {}
    return thresholds(eps).model_dump()
