"""
Gamma-equivalence experiment: admissibility of a jump density g, convergence of
G_eps(u) to M_s(u), and the plateau long-time check with g in place of J.
"""

import logging
from typing import List

import numpy as np
from pydantic import Field, field_validator

from energy_core import g_eps_energy
from experiments import Experiment as BaseExperiment
from experiments import ExperimentParams, ExperimentResult, RunContext
from expressions import check_source, density_from_expression, function_from_expression
from longtime import PlateauConfig, gprime_longtime_check
from piecewise import ms_energy

logger = logging.getLogger(__name__)

CONDITIONS = ("g(0)=0", "g'(0)=1", "concavity", "logarithmic growth")


class GammaEquivParams(ExperimentParams):
    density: str = "2*log(1 + w/2)"
    function: str = "step(x, 0.5)"
    eps: List[float] = Field([1e-3, 1e-6, 1e-9], min_length=1)
    longtime: bool = True
    x0: float = 0.25
    x1: float = 0.75
    z0: float = 0.45
    longtime_eps: float = Field(1e-6, gt=0.0, lt=1.0)
    tau: float = Field(1e-5, gt=0.0)
    T: float = Field(0.05, gt=0.0)

    @field_validator("density")
    @classmethod
    def _density_grammar(cls, v: str) -> str:
        return check_source(v, "w")

    @field_validator("function")
    @classmethod
    def _function_grammar(cls, v: str) -> str:
        return check_source(v, "x")

    @field_validator("eps")
    @classmethod
    def _in_range(cls, v: List[float]) -> List[float]:
        if any(not 0.0 < e < 1.0 for e in v):
            raise ValueError("every eps must lie in (0, 1)")
        return v


class Experiment(BaseExperiment):
    name = "gamma-equiv"
    description = "Admissibility, G_eps convergence and long-time behaviour of a jump density g"
    params_model = GammaEquivParams

    def run(self, params: GammaEquivParams, ctx: RunContext) -> ExperimentResult:
        g = density_from_expression(params.density)
        failed = g.violations()
        result = ExperimentResult()
        result.add_table("conditions.csv", ["condition", "holds"], [[c, c not in failed] for c in CONDITIONS])
        result.summary.update({"density": g.name, "admissible": not failed})

        if failed:
            logger.warning(f"⚠️ Density '{g.name}' fails {failed}; skipping G_eps convergence")
        else:
            u = function_from_expression(params.function)
            target = ms_energy(u)
            rows = []
            for eps in params.eps:
                value = g_eps_energy(u, eps, g)
                rows.append({"eps": eps, "g_energy": value, "ms_energy": target, "gap": abs(value - target)})
            result.add_dict_table("g_energy.csv", rows)
            gaps = np.array([r["gap"] for r in rows])
            result.summary.update({
                "final_gap": rows[-1]["gap"],
                "monotone": bool(np.all(np.diff(gaps) <= 0.0)),
            })

        local = [c for c in failed if c != "logarithmic growth"]
        if params.longtime and not local:
            cfg = PlateauConfig(x0=params.x0, x1=params.x1, z0=params.z0, eps=params.longtime_eps,
                                tau=params.tau, T=params.T)
            report = gprime_longtime_check(g, cfg)
            result.add_dict_table("longtime.csv", [report],
                                  ["density", "asymptotic_slope", "slope_ok", "sup_error", "matches", "diverges"])
            result.summary.update({"longtime_sup_error": report["sup_error"], "matches": report["matches"]})
            result.details["plateau"] = cfg.model_dump()

        result.details["violations"] = failed
        return result
