"""
PM-Lab Long-Time Motion
Time-scaled minimizing movements on plateau competitors (0 on (0,x0), z on (x0,x1),
1 on (x1,1)), the limit ODE z' = -(2/(x1-x0)) (1-2z)/(z(1-z)) and their comparison.
"""

import logging
import math
from typing import Any, Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from energy_core import ConcaveJumpDensity, j_potential, j_prime, j_second, log_eps
from errors import BracketError, SingularityError
from settings import get_settings
from solvers import rk4, safeguarded_newton
from traces import EvolutionTrace

logger = logging.getLogger(__name__)

STEP_TOL = 1e-13
MATCH_TOL = 0.05


class PlateauConfig(BaseModel):
    """Two jumps at x0 < x1, plateau value z, boundary values 0 and 1"""

    model_config = ConfigDict(frozen=True)

    x0: float = Field(gt=0.0, lt=1.0)
    x1: float = Field(gt=0.0, lt=1.0)
    z0: float = Field(ge=0.0, le=1.0)
    eps: float = Field(gt=0.0, lt=1.0)
    tau: float = Field(gt=0.0)
    T: float = Field(ge=0.0)
    time_scale: Optional[float] = Field(None, gt=0.0)
    left_value: float = 0.0
    right_value: float = 1.0

    @model_validator(mode="after")
    def _ordered(self) -> "PlateauConfig":
        if not self.x0 < self.x1:
            raise ValueError(f"jump positions must satisfy x0 < x1, got {self.x0} >= {self.x1}")
        return self

    @property
    def gap(self) -> float:
        return self.x1 - self.x0

    @property
    def lam(self) -> float:
        """Time scale lambda; 1/|log eps| unless overridden"""
        return 1.0 / log_eps(self.eps) if self.time_scale is None else self.time_scale

    @property
    def steps(self) -> int:
        return int(math.floor(self.T / self.tau * (1.0 + 1e-12)))

    @property
    def kappa(self) -> float:
        step = self.tau / self.lam
        return step / self.gap


class JumpForce:
    """Energy of a single jump of size z and its z-derivatives"""

    def __init__(self, eps: float, density: Optional[ConcaveJumpDensity] = None):
        self.eps = eps
        self.big_l = log_eps(eps)
        self.scale = math.sqrt(self.big_l / eps)
        self.density = density

    def energy(self, z: float) -> float:
        w = self.scale * abs(z)
        value = j_potential(w) if self.density is None else self.density.g(w)
        return float(value) / self.big_l

    def first(self, z: float) -> float:
        w = self.scale * abs(z)
        slope = j_prime(w) if self.density is None else self.density.g_prime(w)
        return math.copysign(float(slope) * self.scale / self.big_l, z) if z else 0.0

    def second(self, z: float) -> float:
        w = self.scale * abs(z)
        curv = j_second(w) if self.density is None else self.density.second(w)
        return float(curv) * self.scale ** 2 / self.big_l


# ============================================================================
# DISCRETE SCHEME
# ============================================================================

def _residual(force: JumpForce, kappa: float, z_prev: float):
    def g(z: float) -> float:
        return z - z_prev + kappa * (force.first(z) - force.first(1.0 - z))

    def dg(z: float) -> float:
        return 1.0 + kappa * (force.second(z) + force.second(1.0 - z))

    return g, dg


def _solve_lower_half(z_prev: float, kappa: float, force: JumpForce) -> float:
    g, dg = _residual(force, kappa, z_prev)
    at_prev = g(z_prev)
    if at_prev == 0.0:
        return z_prev
    width = max(1e-3, 1e-2 * z_prev)
    if at_prev > 0.0:
        lo = z_prev - width
        while lo > 0.0 and g(lo) > 0.0:
            width *= 2.0
            lo = z_prev - width
        lo, hi = max(lo, 0.0), z_prev
    else:
        hi = z_prev + width
        while hi < 1.0 and g(hi) < 0.0:
            width *= 2.0
            hi = z_prev + width
        lo, hi = z_prev, min(hi, 1.0)
    root, residual = safeguarded_newton(g, dg, lo, hi, x0=z_prev, tol=STEP_TOL)
    if residual > STEP_TOL:
        raise BracketError(f"plateau step from z={z_prev} stopped at residual {residual:.3e}")
    return root


def scaled_step(z_prev: float, cfg: PlateauConfig, force: Optional[JumpForce] = None) -> float:
    """
    Solve (x1-x0)(z - z_prev)/tau = -(1/lambda)(phi'(z) - phi'(1-z)) for the
    plateau value nearest z_prev. Evaluated on min(z, 1-z) and reflected, so the
    step commutes exactly with z -> 1-z. z = 0 is absorbing.
    """
    if z_prev < 0.0:
        raise ValueError(f"plateau value must be non-negative, got {z_prev}")
    force = force or JumpForce(cfg.eps)
    if z_prev == 0.0:
        return 0.0
    if z_prev > 0.5:
        return 1.0 - scaled_step(1.0 - z_prev, cfg, force)
    return _solve_lower_half(z_prev, cfg.kappa, force)


def scaled_scheme(cfg: PlateauConfig, density: Optional[ConcaveJumpDensity] = None) -> EvolutionTrace:
    """Iterate scaled_step for floor(T/tau) steps; the trace column `z` holds z_k"""
    force = JumpForce(cfg.eps, density)
    trace = EvolutionTrace(scheme="plateau")
    trace.metadata.update({
        "x0": cfg.x0, "x1": cfg.x1, "z0": cfg.z0, "eps": cfg.eps, "tau": cfg.tau, "T": cfg.T,
        "lambda": cfg.lam, "density": density.name if density else "perona-malik", "clamped_at": None,
    })
    z = cfg.z0
    for k in range(cfg.steps + 1):
        if k > 0:
            z = scaled_step(z, cfg, force)
            if z == 0.0 and trace.metadata["clamped_at"] is None:
                trace.metadata["clamped_at"] = k
                logger.warning(f"⚠️ Plateau value clamped at 0 from step {k}")
        trace.record(k * cfg.tau, force.energy(z) + force.energy(1.0 - z), (), z=z)
    return trace


# ============================================================================
# LIMIT ODE
# ============================================================================

def limit_ode_rhs(z: float, gap: float) -> float:
    return -(2.0 / gap) * (1.0 - 2.0 * z) / (z * (1.0 - z))


def limit_ode(cfg: PlateauConfig, dt: Optional[float] = None) -> Dict[str, Any]:
    """
    RK4 on the scheme's time grid, halting once z leaves (delta, 1-delta).
    The grid is sampled every tau; dt subdivides it.
    """
    delta = get_settings().singularity_guard
    if not (delta < cfg.z0 < 1.0 - delta):
        raise SingularityError(f"z0={cfg.z0} lies within {delta} of the singular values 0 and 1")
    dt = cfg.tau if dt is None else dt
    substeps = max(1, int(round(cfg.tau / dt)))
    h = cfg.tau / substeps
    gap = cfg.gap

    def rhs(v: float) -> float:
        return limit_ode_rhs(v, gap) if 0.0 < v < 1.0 else math.nan

    z = [cfg.z0]
    y = cfg.z0
    halted = False
    for _ in range(cfg.steps):
        block = rk4(rhs, y, h, substeps, keep=lambda v: delta < v < 1.0 - delta)
        if block.size < substeps + 1:
            halted = True
            break
        y = float(block[-1])
        z.append(y)
    z_arr = np.array(z)
    if halted:
        logger.info(f"limit ODE reached the singularity guard at t={(z_arr.size - 1) * cfg.tau:.6g}")
    return {"times": np.arange(z_arr.size) * cfg.tau, "z": z_arr, "halted": halted}


def longtime_comparison(cfg: PlateauConfig, dt: Optional[float] = None,
                        density: Optional[ConcaveJumpDensity] = None) -> Dict[str, Any]:
    """sup_k |z_k - z(k tau)| over the grid both runs cover"""
    ode = limit_ode(cfg, dt)
    scheme = scaled_scheme(cfg, density).column("z")
    m = min(scheme.size, ode["z"].size)
    errors = np.abs(scheme[:m] - ode["z"][:m])
    return {
        "times": ode["times"][:m],
        "z_scheme": scheme[:m],
        "z_ode": ode["z"][:m],
        "abs_error": errors,
        "sup_error": float(errors.max()) if m else 0.0,
        "compared_steps": m,
        "ode_halted": ode["halted"],
    }


def time_scaling_check(cfg: PlateauConfig) -> Dict[str, float]:
    """Rerun with eta = tau/lambda on the unscaled energy and compare step by step"""
    eta = cfg.tau / cfg.lam
    unscaled = cfg.model_copy(update={"tau": eta, "time_scale": 1.0, "T": cfg.T / cfg.lam})
    a = scaled_scheme(cfg).column("z")
    b = scaled_scheme(unscaled).column("z")
    m = min(a.size, b.size)
    return {"eta": eta, "compared_steps": m, "max_difference": float(np.max(np.abs(a[:m] - b[:m])))}


def gprime_longtime_check(g: ConcaveJumpDensity, cfg: PlateauConfig) -> Dict[str, Any]:
    """
    Run the plateau scheme with the jump density g in place of J and compare with
    the limit ODE. A matching trajectory needs g'(w) w -> 2.
    """
    g.check(include_growth=False)
    w = 1e9
    slope = float(g.g_prime(w)) * w
    report = longtime_comparison(cfg, density=g)
    matches = report["sup_error"] <= MATCH_TOL
    if not matches:
        logger.warning(f"⚠️ Density '{g.name}' diverges from the limit ODE (sup error {report['sup_error']:.3g})")
    return {
        "density": g.name,
        "asymptotic_slope": slope,
        "slope_ok": abs(slope - 2.0) <= 0.05,
        "sup_error": report["sup_error"],
        "matches": matches,
        "diverges": not matches,
    }
