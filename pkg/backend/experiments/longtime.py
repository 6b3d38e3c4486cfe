"""
Long-time experiment: time-scaled plateau scheme against the limit ODE.
"""

import logging
from typing import Optional

from pydantic import Field, ValidationError, field_validator, model_validator

from experiments import Experiment as BaseExperiment
from experiments import ExperimentParams, ExperimentResult, RunContext
from expressions import check_source, density_from_expression
from longtime import PlateauConfig, longtime_comparison, time_scaling_check
from settings import get_settings

logger = logging.getLogger(__name__)


class LongtimeParams(ExperimentParams):
    x0: float = 0.25
    x1: float = 0.75
    z0: float = 0.45
    eps: float = Field(1e-6, gt=0.0, lt=1.0)
    tau: float = Field(1e-6, gt=0.0)
    T: float = Field(0.05, ge=0.0)
    time_scale: Optional[float] = Field(None, gt=0.0)
    dt: Optional[float] = Field(None, gt=0.0)
    density: Optional[str] = None
    check_time_scaling: bool = False

    @field_validator("density")
    @classmethod
    def _grammar(cls, v: Optional[str]) -> Optional[str]:
        return v if v is None else check_source(v, "w")

    @model_validator(mode="after")
    def _plateau(self) -> "LongtimeParams":
        try:
            self.plateau()
        except ValidationError as e:
            raise ValueError(e.errors()[0]["msg"]) from e
        return self

    def plateau(self) -> PlateauConfig:
        return PlateauConfig(x0=self.x0, x1=self.x1, z0=self.z0, eps=self.eps, tau=self.tau, T=self.T,
                             time_scale=self.time_scale)


class Experiment(BaseExperiment):
    name = "longtime"
    description = "Plateau scheme for two interacting jumps against the limit ODE"
    params_model = LongtimeParams

    def run(self, params: LongtimeParams, ctx: RunContext) -> ExperimentResult:
        cfg = params.plateau()
        density = density_from_expression(params.density) if params.density else None
        report = longtime_comparison(cfg, params.dt, density)

        result = ExperimentResult()
        rows = [
            [k, t, zs, zo, err]
            for k, (t, zs, zo, err) in enumerate(zip(report["times"], report["z_scheme"], report["z_ode"],
                                                     report["abs_error"]))
        ]
        result.add_table("longtime.csv", ["k", "t", "z_scheme", "z_ode", "abs_error"], rows)
        result.summary.update({
            "eps": cfg.eps,
            "tau": cfg.tau,
            "sup_error": report["sup_error"],
            "compared_steps": report["compared_steps"],
            "ode_halted": report["ode_halted"],
        })

        if params.check_time_scaling:
            scaling = time_scaling_check(cfg)
            result.details["time_scaling"] = scaling
            result.checks["time scaling identity"] = scaling["max_difference"] == 0.0

        result.details.update({
            "lambda": cfg.lam,
            "kappa": cfg.kappa,
            "density": density.name if density else "perona-malik",
            "singularity_guard": get_settings().singularity_guard,
        })
        return result
