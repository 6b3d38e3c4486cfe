"""
Dynamics experiment: minimizing movement from an initial datum, with the heat
oracle on each piece, jump persistence, Hoelder and flux diagnostics.
"""

import logging
from typing import List, Optional

import numpy as np
from pydantic import Field, field_validator, model_validator

from dynamics import (
    MMConfig,
    flux_diagnostics,
    holder_estimate,
    holder_refinement_check,
    jump_persistence_check,
    jump_set_trace,
    l2_distance,
    minimizing_movement,
)
from energy_core import LatticeField, lattice_size, sample_field
from errors import InvariantViolation, StabilityError
from experiments import Experiment as BaseExperiment
from experiments import ExperimentParams, ExperimentResult, RunContext, threshold_details
from expressions import check_source, function_from_expression
from heat import heat_oracle
from outputs import write_csv
from traces import EvolutionTrace

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["k", "t", "energy", "sup_norm", "jumps", "holder_C_running", "mass", "dissipation"]


class DynamicsParams(ExperimentParams):
    initial: str = "cos(pi*x)"
    n: Optional[int] = Field(None, ge=2)
    eps: Optional[float] = Field(None, gt=0.0, lt=1.0)
    tau: Optional[float] = Field(None, gt=0.0)
    T: float = Field(0.01, ge=0.0)
    allow_unstable: bool = False
    dump_every: Optional[int] = Field(None, ge=1)
    gamma: Optional[float] = Field(None, gt=0.0)
    compare_heat: bool = True
    holder_refinement: bool = False

    @field_validator("initial")
    @classmethod
    def _grammar(cls, v: str) -> str:
        return check_source(v, "x")

    @model_validator(mode="after")
    def _materialize(self) -> "DynamicsParams":
        if self.n is None and self.eps is None:
            self.n = 1000
        if self.n is None:
            self.n = lattice_size(self.eps)
        elif self.eps is not None and lattice_size(self.eps) != self.n:
            raise ValueError(f"eps={self.eps} does not match n={self.n}")
        self.eps = 1.0 / self.n
        if self.tau is None:
            self.tau = self.eps ** 2 / 8.0
        if 4.0 * self.tau / self.eps ** 2 >= 1.0 and not self.allow_unstable:
            raise StabilityError(f"4 tau/eps^2 = {4.0 * self.tau / self.eps ** 2:.4g} >= 1; "
                                 "set allow_unstable=true to run out of regime")
        return self

    def mm_config(self) -> MMConfig:
        floor = {} if self.gamma is None else {"jump_floor": self.gamma}
        return MMConfig(eps=self.eps, tau=self.tau, T=self.T, dump_every=self.dump_every,
                        allow_unstable=self.allow_unstable, **floor)


def _trace_rows(trace: EvolutionTrace) -> List[list]:
    cols = trace.columns
    return [
        [k, t, e, cols["sup_norm"][k], len(trace.jump_sets[k]), cols["holder_C_running"][k],
         cols["mass"][k], cols["dissipation"][k]]
        for k, (t, e) in enumerate(zip(trace.times, trace.energies))
    ]


class Experiment(BaseExperiment):
    name = "dynamics"
    description = "Minimizing movements of F_eps compared with the heat flow on each piece"
    params_model = DynamicsParams

    def run(self, params: DynamicsParams, ctx: RunContext) -> ExperimentResult:
        u = function_from_expression(params.initial)
        u0 = sample_field(u, params.n)
        cfg = params.mm_config()
        dump_dir = ctx.out_dir / "states" if params.dump_every else None

        result = ExperimentResult()
        try:
            trace = minimizing_movement(u0, cfg, dump_dir)
        except InvariantViolation as e:
            # keep the partial trace for inspection
            if getattr(e, "trace", None) is not None:
                write_csv(ctx.out_dir / "trace.csv", TRACE_COLUMNS, _trace_rows(e.trace))
            raise
        result.add_table("trace.csv", TRACE_COLUMNS, _trace_rows(trace))

        final: LatticeField = trace.final_state
        x = final.nodes
        final_rows = [x, final.values]
        header = ["x", "u"]
        if params.compare_heat:
            heat = heat_oracle(u, params.T)
            reference = heat.evaluate(x)
            final_rows.append(reference)
            header.append("u_heat")
            distance = l2_distance(final, heat.evaluate)
            result.summary["l2_to_heat"] = distance
            result.details["heat_jumps"] = heat.jumps.tolist()
        result.add_table("final_state.csv", header, [list(r) for r in zip(*final_rows)])

        if cfg.steps >= 2:
            holder = holder_estimate(trace)
            result.summary["holder_C"] = holder["C_measured"]
            result.checks["Hoelder bound sqrt(2 F(u0))"] = holder["within_bound"]
        if params.holder_refinement:
            result.details["holder_refinement"] = holder_refinement_check(u0, cfg)

        inclusion = jump_set_trace(trace)
        if cfg.stable:
            result.checks["jump-set inclusion"] = inclusion["holds"]

        if u.jump_count:
            persistence = jump_persistence_check(trace, params.gamma)
            result.add_dict_table("jumps.csv", persistence["jumps"],
                                  ["position", "size", "persists", "first_missing_step"])
            result.checks["jump persistence"] = persistence["holds"]
            result.details["small_jumps"] = {k: persistence[k] for k in ("small_jump_sum", "small_jump_bound")}

        flux_rows = [[k, float(np.max(np.abs(phi))) if phi.size else 0.0] for k, phi in trace.flux_snapshots]
        result.add_table("flux.csv", ["k", "max_abs_flux"], flux_rows)
        final_flux = flux_diagnostics(final, params.gamma)
        result.details["final_flux"] = final_flux

        result.summary.update({
            "eps": cfg.eps,
            "tau": cfg.tau,
            "steps": cfg.steps,
            "final_energy": trace.energies[-1],
            "final_jumps": len(trace.jump_sets[-1]),
            "fallback_steps": trace.metadata["fallback_steps"],
            "tainted": trace.tainted,
        })
        result.details.update({
            "thresholds": threshold_details(cfg.eps),
            "mm_config": cfg.model_dump(),
            "lipschitz": cfg.lipschitz,
            "state_stride": trace.metadata["state_stride"],
            "jump_set_inclusion": inclusion,
        })
        return result
