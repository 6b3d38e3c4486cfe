"""
Statics experiment: branch table over a load sweep, optional global-minimum
comparison and the degenerate threshold certificate.
"""

import logging
from typing import List, Optional

from pydantic import Field, model_validator

from energy_core import lattice_size
from experiments import Experiment as BaseExperiment
from experiments import ExperimentParams, ExperimentResult, RunContext, threshold_details
from settings import get_settings
from statics import (
    Classification,
    critical_lambda,
    degenerate_threshold_case,
    global_minimum_check,
    local_minima_table,
    local_minimum_counts,
    uniform_threshold,
)

logger = logging.getLogger(__name__)

BRANCH_COLUMNS = ["lambda", "branch", "w", "energy", "classification", "hessian_min_eigenvalue"]


class StaticsParams(ExperimentParams):
    eps: float = Field(1e-2, gt=0.0, lt=1.0)
    n: Optional[int] = Field(None, ge=2)
    lambdas: List[float] = Field(min_length=1)
    perturbations: Optional[int] = Field(None, ge=0)
    global_check: List[float] = []
    global_tol: float = Field(0.05, gt=0.0)
    degenerate_case: bool = False

    @model_validator(mode="after")
    def _materialize(self) -> "StaticsParams":
        if self.n is None:
            self.n = lattice_size(self.eps)
        if self.perturbations is None:
            self.perturbations = get_settings().perturbation_count
        return self


class Experiment(BaseExperiment):
    name = "statics"
    description = "Stationary branches of F_eps under Dirichlet load, classified by the projected Hessian"
    params_model = StaticsParams

    def run(self, params: StaticsParams, ctx: RunContext) -> ExperimentResult:
        result = ExperimentResult()
        rows = local_minima_table(params.eps, params.lambdas, params.n,
                                  perturbations=params.perturbations, seed=ctx.seed)
        result.add_dict_table("branches.csv", rows, BRANCH_COLUMNS)

        lattice_rows = [r for r in rows if not r["branch"].startswith("ms-")]
        minima = [r for r in lattice_rows if r["classification"] == Classification.LOCAL_MIN.value]
        result.summary.update({
            "eps": params.eps,
            "n": params.n,
            "critical_lambda": critical_lambda(params.eps),
            "branches": len(lattice_rows),
            "local_minima": len(minima),
            "min_energy": min((r["energy"] for r in lattice_rows), default=float("nan")),
        })

        counts = local_minimum_counts(params.eps, rows)
        result.add_dict_table("local_minima.csv", counts["rows"], ["lambda", "local_minima", "expected"])
        result.checks["local-minimum count per load"] = counts["holds"]

        if params.global_check:
            checks = [global_minimum_check(params.eps, lam, params.n, params.global_tol) for lam in params.global_check]
            result.add_dict_table("global_minimum.csv", checks,
                                  ["lambda", "pm_branch_min", "ms_candidate", "combined", "target", "holds"])
            result.checks["global minimum matches min(lambda^2, 1)"] = all(c["holds"] for c in checks)

        if params.degenerate_case:
            profile = degenerate_threshold_case(params.eps, params.n)
            cert = profile.certificate
            result.add_table("degenerate.csv", ["classification", "hessian_min_eigenvalue", "cubic_coefficient",
                                                "energy_drop"],
                             [[profile.classification.value, profile.hessian_min_eigenvalue,
                               cert["cubic_coefficient"], cert["energy_drop"]]])
            result.checks["degenerate threshold is not a minimum"] = cert["energy_drop"] > 0.0

        result.details.update({
            "thresholds": threshold_details(params.eps),
            "critical_lambda": critical_lambda(params.eps),
            "uniform_threshold": uniform_threshold(params.eps),
            "perturbation_magnitude": get_settings().perturbation_magnitude,
        })
        logger.info(f"📊 statics: {len(lattice_rows)} lattice branches, {len(minima)} local minima")
        return result
