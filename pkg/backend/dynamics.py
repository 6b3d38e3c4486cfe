"""
PM-Lab Minimizing Movements
Implicit time stepping along F_eps with free ends, per-step structural checks and
the trace diagnostics (Hoelder constant, flux field, jump-set inclusion, jump persistence).
"""

import logging
import math
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from energy_core import (
    LatticeField,
    f_eps_prime,
    lattice_energy,
    lattice_gradient,
    lattice_hessian,
    log_eps,
    pm_energy,
)
from errors import InvariantViolation, SolverDivergence, StabilityError
from interpolation import chambolle_interpolation, jump_count_bound, jump_springs, thresholds
from outputs import write_state_dump
from settings import get_settings
from solvers import SolveReport, damped_newton_banded, richardson
from traces import EvolutionTrace

logger = logging.getLogger(__name__)

ROUNDING = 16.0 * np.finfo(float).eps


def _setting(name: str):
    return Field(default_factory=lambda: getattr(get_settings(), name))


class MMConfig(BaseModel):
    """Minimizing-movement parameters; 4 tau / eps^2 < 1 unless allow_unstable"""

    model_config = ConfigDict(frozen=True)

    eps: float = Field(gt=0.0, lt=1.0)
    tau: float = Field(gt=0.0)
    T: float = Field(ge=0.0)
    solver_tol: float = _setting("solver_tol")
    max_newton_iters: int = _setting("max_newton_iters")
    fallback_iters: int = _setting("fallback_iters")
    jump_floor: float = _setting("jump_floor")
    flux_stride: int = _setting("flux_stride")
    max_recorded_states: int = _setting("max_recorded_states")
    dump_every: Optional[int] = Field(None, ge=1)
    allow_unstable: bool = False

    @model_validator(mode="after")
    def _stability(self) -> "MMConfig":
        if not self.stable and not self.allow_unstable:
            raise StabilityError(
                f"4 tau/eps^2 = {self.lipschitz:.4g} >= 1; pass allow_unstable to run out of regime"
            )
        return self

    @property
    def lipschitz(self) -> float:
        """Lipschitz constant 2 (tau/eps^2) max f''_eps of the increment map"""
        return 4.0 * self.tau / self.eps ** 2

    @property
    def stable(self) -> bool:
        return self.lipschitz < 1.0

    @property
    def steps(self) -> int:
        return int(math.floor(self.T / self.tau * (1.0 + 1e-12)))


# ============================================================================
# ONE STEP
# ============================================================================

def _prox_solve(prev: np.ndarray, cfg: MMConfig, x0: Optional[np.ndarray] = None) -> SolveReport:
    """Solve v - u + (tau/eps) grad F(v) = 0 (the optimality system scaled by tau/eps)"""
    eps, ratio = cfg.eps, cfg.tau / cfg.eps

    def residual(v: np.ndarray) -> np.ndarray:
        return v - prev + ratio * lattice_gradient(v, eps)

    def jacobian(v: np.ndarray) -> np.ndarray:
        return lattice_hessian(v, eps).banded(shift=1.0, scale=ratio)

    start = prev if x0 is None else x0
    try:
        return damped_newton_banded(residual, jacobian, start, cfg.solver_tol, cfg.max_newton_iters)
    except SolverDivergence as e:
        # spectrum of the Jacobian lies in [1 - tau/eps^2, 1 + 8 tau/eps^2]
        omega = 2.0 / (2.0 + 7.0 * cfg.tau / eps ** 2)
        logger.warning(f"⚠️ Newton stalled ({e}); falling back to {cfg.fallback_iters} fixed-point iterations")
        return richardson(residual, start, omega, cfg.solver_tol, cfg.fallback_iters)


def prox_residual(prev: np.ndarray, values: np.ndarray, cfg: MMConfig) -> np.ndarray:
    """Stationarity residual (eps/tau)(v - u) + grad F(v) of the prox problem"""
    return (values - prev) * (cfg.eps / cfg.tau) + lattice_gradient(values, cfg.eps)


def optimality_bound(values: np.ndarray, cfg: MMConfig) -> float:
    """solver_tol carried from the scaled residual to the unscaled one, plus round-off in v"""
    return (cfg.solver_tol + ROUNDING * max(1.0, float(np.max(np.abs(values))))) * cfg.eps / cfg.tau


def prox_step(prev: LatticeField, cfg: MMConfig) -> LatticeField:
    """Unique minimizer of F_eps(v) + (1/2tau) sum eps |v_i - prev_i|^2"""
    if not math.isclose(prev.spacing, cfg.eps, rel_tol=1e-12):
        raise ValueError(f"field spacing {prev.spacing} does not match cfg.eps {cfg.eps}")
    report = _prox_solve(prev.values, cfg)
    stationarity = float(np.max(np.abs(prox_residual(prev.values, report.solution, cfg))))
    if stationarity > optimality_bound(report.solution, cfg):
        raise SolverDivergence("prox stationarity residual above tolerance", stationarity)
    return prev.with_values(report.solution)


def prox_uniqueness_check(prev: LatticeField, cfg: MMConfig, restarts: int = 5, seed: int = 0) -> Dict[str, Any]:
    """Restart Newton from random guesses and compare minimizers"""
    rng = np.random.default_rng(seed)
    reference = _prox_solve(prev.values, cfg).solution
    scale = 0.1 * (1.0 + float(np.max(np.abs(prev.values))))
    deviations = []
    for _ in range(restarts):
        guess = prev.values + rng.normal(0.0, scale, prev.values.shape)
        other = _prox_solve(prev.values, cfg, x0=guess).solution
        deviations.append(float(np.max(np.abs(other - reference))))
    worst = max(deviations) if deviations else 0.0
    return {"restarts": restarts, "max_deviation": worst, "unique": worst <= 1e-9}


# ============================================================================
# TRACES
# ============================================================================

def discrete_l2(values: np.ndarray, eps: float) -> float:
    """sqrt(eps sum_i v_i^2) over every node"""
    return math.sqrt(eps * float(np.sum(np.square(values))))


def l2_distance(field: LatticeField, u: Callable[[np.ndarray], np.ndarray],
                interval: Optional[Tuple[float, float]] = None) -> float:
    """Discrete L2 distance to u sampled at the nodes, optionally on [a, b)"""
    x = field.nodes
    diff = field.values - np.asarray(u(x), dtype=float)
    if interval is not None:
        a, b = interval
        diff = diff[(x >= a) & (x < b)]
    return discrete_l2(diff, field.spacing)


def _holder_over(states: List[Tuple[float, np.ndarray]], eps: float, tau: float) -> float:
    best = 0.0
    for i, (s, us) in enumerate(states[:-1]):
        for t, ut in states[i + 1:]:
            best = max(best, discrete_l2(ut - us, eps) / math.sqrt(t - s + tau))
    return best


def _large_springs(values: np.ndarray, floor: float) -> Tuple[int, ...]:
    return tuple(np.flatnonzero(np.abs(np.diff(values)) > floor).tolist())


def minimizing_movement(u0: LatticeField, cfg: MMConfig, dump_dir: Optional[Path] = None) -> EvolutionTrace:
    """
    Iterate prox_step for floor(T/tau) steps. Every step checks energy decay,
    sup-norm decay, the dissipation inequality and (under the stability condition)
    jump-set inclusion; failures are recorded and raised at the end of the run.
    States are kept at a stride so that at most max_recorded_states survive.
    """
    if not math.isclose(u0.spacing, cfg.eps, rel_tol=1e-12):
        raise ValueError(f"field spacing {u0.spacing} does not match cfg.eps {cfg.eps}")
    if not np.all(np.isfinite(u0.values)):
        raise ValueError("initial datum must be finite")

    eps, tau = cfg.eps, cfg.tau
    steps = cfg.steps
    stride = max(1, math.ceil(steps / (cfg.max_recorded_states - 1)))

    trace = EvolutionTrace(scheme="minimizing-movement", tainted=not cfg.stable)
    trace.metadata.update({
        "eps": eps, "n": u0.n, "tau": tau, "T": cfg.T, "steps": steps, "state_stride": stride,
        "lipschitz": cfg.lipschitz, "stable": cfg.stable, "fallback_steps": 0, "jump_floor": cfg.jump_floor,
    })
    if trace.tainted:
        logger.warning(f"⚠️ Out-of-regime run: 4 tau/eps^2 = {cfg.lipschitz:.3g}; trace marked tainted")

    u = u0.values.copy()
    energy = lattice_energy(u, eps)
    jumps = tuple(jump_springs(u0).tolist())
    kept: List[Tuple[float, np.ndarray]] = [(0.0, u.copy())]
    holder = 0.0
    trace.record(0.0, energy, jumps, sup_norm=float(np.max(np.abs(u))), mass=eps * float(np.sum(u)),
                 dissipation=0.0, holder_C_running=holder)
    trace.large_springs.append(_large_springs(u, cfg.jump_floor))
    trace.keep_state(0, u0)
    trace.flux_snapshots.append((0, flux_field(u0)))

    logger.info(f"🚀 Minimizing movement eps={eps:g} tau={tau:g} T={cfg.T:g}: {steps} steps")
    for k in range(1, steps + 1):
        report = _prox_solve(u, cfg)
        if report.method != "newton":
            trace.metadata["fallback_steps"] += 1
        v = report.solution
        new_energy = lattice_energy(v, eps)
        stationarity = float(np.max(np.abs(prox_residual(u, v, cfg))))
        if stationarity > optimality_bound(v, cfg):
            trace.flag(k, "prox stationarity", residual=stationarity, bound=optimality_bound(v, cfg))
        dissipation = float(np.sum(np.square(v - u))) * eps / (2.0 * tau)
        slack = 1e-12 * max(1.0, energy)
        sup_old, sup_new = float(np.max(np.abs(u))), float(np.max(np.abs(v)))
        field = u0.with_values(v)
        new_jumps = tuple(jump_springs(field).tolist())

        if new_energy > energy + slack:
            trace.flag(k, "energy non-increasing", before=energy, after=new_energy)
        if sup_new > sup_old + 1e-12 * max(1.0, sup_old) + cfg.solver_tol:
            trace.flag(k, "sup-norm non-increasing", before=sup_old, after=sup_new)
        if new_energy + dissipation > energy + slack:
            trace.flag(k, "dissipation inequality", lhs=new_energy + dissipation, rhs=energy)
        if not set(new_jumps) <= set(jumps):
            trace.flag(k, "jump-set inclusion", new=sorted(set(new_jumps) - set(jumps)))

        t = k * tau
        if k % stride == 0 or k == steps:
            kept.append((t, v.copy()))
            trace.keep_state(k, field)
            holder = max(holder, max(discrete_l2(v - us, eps) / math.sqrt(t - s + tau) for s, us in kept[:-1]))
        if k % cfg.flux_stride == 0:
            trace.flux_snapshots.append((k, flux_field(field)))
        if cfg.dump_every and dump_dir is not None and k % cfg.dump_every == 0:
            write_state_dump(Path(dump_dir) / f"state-{k:08d}.bin", field, tau, k)

        trace.large_springs.append(_large_springs(v, cfg.jump_floor))
        trace.record(t, new_energy, new_jumps, sup_norm=sup_new, mass=eps * float(np.sum(v)),
                     dissipation=dissipation, holder_C_running=holder)
        logger.debug(f"k={k} E={new_energy:.12g} newton_its={report.iterations}")
        u, energy, jumps = v, new_energy, new_jumps

    logger.info(f"✅ Minimizing movement done: E {trace.energies[0]:.6f} → {trace.energies[-1]:.6f}, "
                f"{len(trace.violations)} flagged steps, {trace.metadata['fallback_steps']} fallbacks")
    if trace.violations:
        hard = [v for v in trace.violations if cfg.stable or v["check"] != "jump-set inclusion"]
        if hard:
            logger.error(f"❌ {len(hard)} structural violations, first: {hard[0]}")
            error = InvariantViolation(hard[0]["check"], {"first": hard[0], "count": len(hard)})
            error.trace = trace
            raise error
    return trace


# ============================================================================
# DIAGNOSTICS
# ============================================================================

def flux_field(field: LatticeField) -> np.ndarray:
    """phi_i = f'_eps((u_{i+1} - u_i)/eps)"""
    return f_eps_prime(field.spacing, field.increments / field.spacing)


def flux_diagnostics(field: LatticeField, gamma: Optional[float] = None) -> Dict[str, Any]:
    """
    Springs with |du| >= gamma carry |phi| <= 2 gamma / (eps + gamma^2 |log eps|);
    on the others phi is 2 s up to a relative error below eps |log eps| s^2.
    """
    gamma = get_settings().jump_floor if gamma is None else gamma
    eps = field.spacing
    big_l = log_eps(eps)
    phi = flux_field(field)
    du = np.abs(field.increments)
    cracked = du >= gamma
    bound = 2.0 * gamma / (eps + gamma * gamma * big_l)
    jump_sup = float(np.max(np.abs(phi[cracked]))) if np.any(cracked) else 0.0

    slopes = field.increments / eps
    smooth = ~cracked & (slopes != 0.0)
    rel_err = np.abs(phi[smooth] - 2.0 * slopes[smooth]) / np.abs(2.0 * slopes[smooth])
    taylor = eps * big_l * slopes[smooth] ** 2
    return {
        "jump_springs": int(np.count_nonzero(cracked)),
        "jump_flux_sup": jump_sup,
        "jump_flux_bound": bound,
        "jump_bound_holds": jump_sup <= bound * (1.0 + 1e-12),
        "smooth_max_rel_error": float(rel_err.max()) if rel_err.size else 0.0,
        "smooth_bound_holds": bool(np.all(rel_err <= taylor * (1.0 + 1e-9) + 1e-15)),
    }


def jump_set_trace(trace: EvolutionTrace) -> Dict[str, Any]:
    """Check I^j(u^{k+1}) within I^j(u^k) along the whole trace"""
    lipschitz = trace.metadata.get("lipschitz", math.nan)
    first: Optional[Dict[str, Any]] = None
    for k, (before, after) in enumerate(zip(trace.jump_sets, trace.jump_sets[1:]), start=1):
        extra = set(after) - set(before)
        if extra:
            first = {"step": k, "new_springs": sorted(extra)}
            break
    report = {
        "holds": first is None,
        "first_violation": first,
        "lipschitz": lipschitz,
        "condition_held": bool(lipschitz < 1.0),
    }
    if first is not None and not report["condition_held"]:
        report["note"] = f"stability condition violated (4 tau/eps^2 = {lipschitz:.3g})"
    return report


def holder_estimate(trace: EvolutionTrace) -> Dict[str, float]:
    """max ||u(t) - u(s)||_2 / sqrt(t - s + tau) over kept states, with the bound sqrt(2 F(u0))"""
    if len(trace.states) < 3:
        raise ValueError("Hoelder estimate needs at least 3 recorded states")
    eps, tau = trace.metadata["eps"], trace.metadata["tau"]
    states = [(k * tau, s.values) for k, s in trace.states]
    c = _holder_over(states, eps, tau)
    bound = math.sqrt(2.0 * trace.energies[0])
    if not math.isfinite(c):
        raise InvariantViolation("finite Hoelder constant", {"C": c})
    return {"C_measured": c, "bound": bound, "within_bound": c <= bound * (1.0 + 1e-9)}


def holder_refinement_check(u0: LatticeField, cfg: MMConfig) -> Dict[str, Any]:
    """C at tau and tau/2 must agree within a factor 2"""
    coarse = holder_estimate(minimizing_movement(u0, cfg))["C_measured"]
    fine = holder_estimate(minimizing_movement(u0, cfg.model_copy(update={"tau": cfg.tau / 2.0})))["C_measured"]
    ratio = fine / coarse if coarse > 0.0 else (1.0 if fine == 0.0 else math.inf)
    return {"C_tau": coarse, "C_half_tau": fine, "ratio": ratio, "stable": 0.5 <= ratio <= 2.0}


def jump_persistence_check(trace: EvolutionTrace, gamma: Optional[float] = None) -> Dict[str, Any]:
    """
    Every jump of size > gamma in the final Chambolle interpolation must have a
    spring with |du| > gamma within 2 eps at every step of the run. gamma must be
    the jump_floor the run recorded its large springs with.
    """
    floor = trace.metadata.get("jump_floor")
    gamma = floor if gamma is None else gamma
    if floor is None or len(trace.large_springs) != trace.steps:
        raise ValueError("trace carries no per-step record of large springs")
    if gamma != floor:
        raise ValueError(f"gamma={gamma} differs from the recorded jump_floor={floor}")
    final: LatticeField = trace.final_state
    eps = final.spacing
    th = thresholds(eps)
    limit = chambolle_interpolation(final, th)
    sizes = limit.jump_sizes()

    persistent = []
    for x, size in zip(limit.jumps.tolist(), sizes.tolist()):
        if size <= gamma:
            continue
        springs = np.arange(final.n)
        window = set(springs[np.abs((springs + 1) * eps - x) <= 2.0 * eps + 1e-15].tolist())
        missing = next((k for k, big in enumerate(trace.large_springs) if window.isdisjoint(big)), None)
        persistent.append({"position": x, "size": size, "persists": missing is None, "first_missing_step": missing})

    small = sizes[sizes <= th.c]
    count = jump_count_bound(final, th)
    return {
        "jumps": persistent,
        "holds": all(j["persists"] for j in persistent),
        "small_jump_sum": float(small.sum()),
        "small_jump_bound": th.c * count["bound"],
        "energy": pm_energy(final),
    }
