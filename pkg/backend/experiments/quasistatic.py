"""
Quasistatic experiment: incremental minimization under a load program, one trace
per eps plus the sup-gap against the Mumford-Shah energy E(t).
"""

import logging
from typing import List, Optional

from pydantic import Field, field_validator

from experiments import Experiment as BaseExperiment
from experiments import ExperimentParams, ExperimentResult, RunContext, threshold_details
from expressions import check_source, load_from_expression
from quasistatic import quasistatic_convergence_table, unloading_energy_constant

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["k", "t", "load", "energy", "ms_energy", "w_last", "memory", "elastic"]


class QuasistaticParams(ExperimentParams):
    load: str = "hat(t, 1.5)"
    eps: List[float] = Field([1e-3], min_length=1)
    tau: float = Field(1e-3, gt=0.0)
    T: float = Field(4.5, gt=0.0)
    n: Optional[int] = Field(None, ge=2)
    dissipation: bool = True
    slack: float = Field(0.05, ge=0.0)

    @field_validator("load")
    @classmethod
    def _grammar(cls, v: str) -> str:
        return check_source(v, "t")

    @field_validator("eps")
    @classmethod
    def _decreasing(cls, v: List[float]) -> List[float]:
        if any(not 0.0 < e <= 1e-2 for e in v):
            raise ValueError("every eps must lie in (0, 1e-2]")
        if any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError("eps list must be strictly decreasing")
        return v


class Experiment(BaseExperiment):
    name = "quasistatic"
    description = "Quasistatic crack evolution with dissipation against the Mumford-Shah energy"
    params_model = QuasistaticParams

    def run(self, params: QuasistaticParams, ctx: RunContext) -> ExperimentResult:
        load = load_from_expression(params.load, horizon=max(10.0, params.T))
        report = quasistatic_convergence_table(load, params.eps, params.tau, params.T, params.slack,
                                               params.n, params.dissipation)
        oracle = report["oracle"]
        result = ExperimentResult()

        frozen = []
        for eps, trace in zip(params.eps, report["traces"]):
            energies = trace.energy_array()
            rows = [
                [k, t, trace.columns["load"][k], e, oracle["energies"][k], trace.columns["w_last"][k],
                 trace.columns["memory"][k], trace.columns["elastic"][k]]
                for k, (t, e) in enumerate(zip(trace.times, energies))
            ]
            result.add_table(f"trace-{eps:.0e}.csv", TRACE_COLUMNS, rows)
            result.add_dict_table(f"events-{eps:.0e}.csv", trace.events, ["step", "t", "from", "to", "reason"])
            frozen.append({"eps": eps, **unloading_energy_constant(trace)})

        gaps = report["rows"]
        result.add_dict_table("convergence.csv", gaps, ["eps", "h_tilde", "sup_gap"])
        result.checks["sup gaps non-increasing in eps"] = report["monotone"]
        if params.dissipation:
            result.checks["energy constant while unloading"] = all(f["holds"] for f in frozen)

        result.summary.update({
            "eps": params.eps[-1],
            "h_tilde": gaps[-1]["h_tilde"],
            "sup_gap": gaps[-1]["sup_gap"],
        })
        result.details.update({
            "load": load.description,
            "frozen_unloading": frozen,
            "negative_load_memory": trace.metadata["negative_load_memory"],
            "thresholds": {repr(e): threshold_details(e) for e in params.eps},
        })
        return result
