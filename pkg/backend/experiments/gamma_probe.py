"""
Gamma-probe experiment: F_eps of the lattice sample of u against M_s(u).
"""

import logging
import math
from typing import List

import numpy as np
from pydantic import Field, field_validator

from energy_core import gamma_probe, log_eps
from experiments import Experiment as BaseExperiment
from experiments import ExperimentParams, ExperimentResult, RunContext, threshold_details
from expressions import check_source, function_from_expression

logger = logging.getLogger(__name__)

GAP_ROUNDING = 1e-12


class GammaProbeParams(ExperimentParams):
    function: str = "x"
    eps: List[float] = Field([1e-3, 1e-4, 1e-5], min_length=1)

    @field_validator("function")
    @classmethod
    def _grammar(cls, v: str) -> str:
        return check_source(v, "x")

    @field_validator("eps")
    @classmethod
    def _decreasing(cls, v: List[float]) -> List[float]:
        if any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError("eps list must be strictly decreasing")
        return v


class Experiment(BaseExperiment):
    name = "gamma-probe"
    description = "F_eps(sample_eps(u)) against the Mumford-Shah energy of u"
    params_model = GammaProbeParams

    def run(self, params: GammaProbeParams, ctx: RunContext) -> ExperimentResult:
        u = function_from_expression(params.function)
        rows = gamma_probe(u, params.eps)
        for row in rows:
            big_l = log_eps(row["eps"])
            # leading excess of a unit jump over its MS cost
            row["jump_correction"] = u.jump_count * math.log(big_l) / big_l

        result = ExperimentResult()
        result.add_dict_table("gamma_probe.csv", rows, ["eps", "n", "pm_energy", "ms_energy", "gap", "jump_correction"])

        gaps = np.array([r["gap"] for r in rows])
        result.summary.update({
            "eps": rows[-1]["eps"],
            "pm_energy": rows[-1]["pm_energy"],
            "ms_energy": rows[-1]["ms_energy"],
            "gap": rows[-1]["gap"],
        })
        # gaps are absolute values; allow round-off once they reach machine level
        result.checks["gaps non-increasing in eps"] = bool(np.all(np.diff(gaps) <= GAP_ROUNDING * np.maximum(1.0, gaps[1:])))
        result.details.update({
            "jumps": u.jumps.tolist(),
            "thresholds": {repr(e): threshold_details(e) for e in params.eps},
        })
        return result
