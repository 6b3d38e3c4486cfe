"""
PM-Lab Quasistatics
Time-discrete evolution of the spring chain under a boundary load h(t) with the
dissipation rule for overstretched springs, the crack threshold h_tilde, the
closed-form energy table for the hat load and the Mumford-Shah reference E(t).

States are kept in closed form (elastic elongation z shared by springs 0..N-2,
elongation w of the last spring, its memory w_bar), so N = 10^6 costs O(1) per step.
"""

import logging
import math
from typing import Any, Callable, Dict, Iterable, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from energy_core import LatticeField, j_potential, lattice_size, log_eps
from errors import InvalidSpacingError, InvariantViolation
from interpolation import thresholds
from phases import Phase, PhaseTracker
from solvers import bracketed_bisection
from statics import critical_lambda
from traces import EvolutionTrace

logger = logging.getLogger(__name__)

H_TILDE_TOL = 1e-10
H_TILDE_CEILING = 2.0
DISCRIMINANT_ROUNDING = 1e-12


# ============================================================================
# LOAD PROGRAMS
# ============================================================================

class LoadProgram(BaseModel):
    """Boundary load t -> h(t) with h(0) = 0"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    h: Callable[[float], float]
    description: str = ""
    horizon: float = Field(10.0, gt=0)

    @model_validator(mode="after")
    def _check(self) -> "LoadProgram":
        if abs(self(0.0)) > 1e-14:
            raise ValueError(f"load must vanish at t=0, got h(0)={self(0.0)}")
        coarse = np.abs(np.diff(self.sample(np.linspace(0.0, self.horizon, 10_001))))
        fine = np.abs(np.diff(self.sample(np.linspace(0.0, self.horizon, 100_001))))
        if fine.max() > 1e-8 and fine.max() > 0.5 * coarse.max():
            raise ValueError(f"load '{self.description}' looks discontinuous (increment {fine.max():.3g} does not shrink)")
        return self

    def __call__(self, t: float) -> float:
        return float(np.asarray(self.h(t), dtype=float))

    def sample(self, times: np.ndarray) -> np.ndarray:
        return np.array([self(float(t)) for t in times])


def zero_load() -> LoadProgram:
    return LoadProgram(h=lambda t: 0.0 * t, description="0")


def ramp_load(slope: float = 1.0) -> LoadProgram:
    return LoadProgram(h=lambda t: slope * t, description=f"ramp({slope})")


def hat_load(t0: float) -> LoadProgram:
    """h(t) = t0 - |t - t0|"""
    return LoadProgram(h=lambda t: t0 - abs(t - t0), description=f"hat({t0})", horizon=max(10.0, 4.0 * t0))


# ============================================================================
# STATES
# ============================================================================

class QuasistaticState(BaseModel):
    """Closed-form state: springs 0..N-2 share elongation `elastic`, spring N-1 has `last`"""

    model_config = ConfigDict(frozen=True)

    eps: float
    n: int
    step: int = 0
    load: float = 0.0
    elastic: float = 0.0
    last: float = 0.0
    memory: float = Field(0.0, ge=0.0)
    peak: float = Field(0.0, ge=0.0)
    phase: Phase = Phase.ELASTIC

    @property
    def crack_index(self) -> int:
        return self.n - 1

    @property
    def field(self) -> LatticeField:
        values = self.elastic * np.arange(self.n + 1, dtype=float)
        values[-1] = self.load
        return LatticeField(n=self.n, values=values)

    @property
    def memory_profile(self) -> np.ndarray:
        out = np.zeros(self.n)
        out[self.crack_index] = self.memory
        return out

    @property
    def scaled_last(self) -> float:
        return math.sqrt(log_eps(self.eps) / self.eps) * self.last


def h_tilde(eps: float, n: Optional[int] = None) -> float:
    """
    Load at which the one-crack branch becomes cheaper than the uniform one.
    eps must be 1/N for an integer N (InvalidSpacingError otherwise, e.g. 3e-3).
    """
    if not (0.0 < eps <= 1e-2):
        raise InvalidSpacingError(f"h_tilde needs 0 < eps <= 1e-2, got {eps!r}")
    model = QuasistaticModel(eps, n, threshold=math.inf)
    lo = critical_lambda(eps)
    value = bracketed_bisection(lambda lam: model.uniform_energy(lam) - model.overstretch_energy(lam),
                                lo, H_TILDE_CEILING, H_TILDE_TOL)
    logger.debug(f"h_tilde(eps={eps:g}) = {value:.12f}")
    return value


class QuasistaticModel:
    """Closed-form minimizers of the incremental problems for one (eps, N)"""

    def __init__(self, eps: float, n: Optional[int] = None, dissipation: bool = True, threshold: Optional[float] = None):
        self.eps = eps
        self.n = lattice_size(eps) if n is None else n
        self.big_l = log_eps(eps)
        self.scale = math.sqrt(self.big_l / eps)
        self.c = (1.0 - eps) / self.big_l
        self.dissipation = dissipation
        self.threshold = h_tilde(eps, self.n) if threshold is None else threshold

    # -- branch energies -------------------------------------------------------

    def _j(self, u: float) -> float:
        return float(j_potential(self.scale * u))

    def overstretch(self, a: float) -> float:
        """Unique minimizer w1 of the one-crack problem for a load a above critical"""
        disc = a * a / 4.0 - self.c
        if disc < 0.0:
            # critical_lambda itself rounds to a discriminant of order -1e-17
            if disc < -DISCRIMINANT_ROUNDING * self.c:
                raise InvariantViolation("overstretch discriminant", {"load": a, "disc": disc})
            disc = 0.0
        return a / 2.0 + math.sqrt(disc)

    def uniform_energy(self, a: float) -> float:
        return self.n * self._j(a / self.n) / self.big_l

    def overstretch_energy(self, a: float) -> float:
        w = self.overstretch(a)
        return ((self.n - 1) * self._j((a - w) / (self.n - 1)) + self._j(w)) / self.big_l

    # -- evolution --------------------------------------------------------------

    def initial_state(self) -> QuasistaticState:
        return QuasistaticState(eps=self.eps, n=self.n)

    def _uniform(self, state: QuasistaticState, h: float, phase: Phase) -> QuasistaticState:
        z = h / self.n
        return state.model_copy(update={
            "step": state.step + 1, "load": h, "elastic": z, "last": z, "phase": phase,
            "peak": max(state.peak, abs(h)),
        })

    def _crack(self, state: QuasistaticState, h: float) -> QuasistaticState:
        a = abs(h)
        w = math.copysign(self.overstretch(a), h)
        memory = state.memory
        if abs(self.scale * w) > 1.0:
            memory = max(memory, abs(w))
        return state.model_copy(update={
            "step": state.step + 1, "load": h, "elastic": (h - w) / (self.n - 1), "last": w,
            "memory": memory, "peak": max(state.peak, a), "phase": Phase.LOADING,
        })

    def step(self, state: QuasistaticState, h: float) -> QuasistaticState:
        a = abs(h)
        if not self.dissipation:
            return self._uniform(state, h, Phase.ELASTIC) if a <= self.threshold else self._crack(state, h)
        if state.memory == 0.0:
            return self._uniform(state, h, Phase.ELASTIC) if a <= self.threshold else self._crack(state, h)
        if a >= state.peak:
            return self._crack(state, h)

        w_bar = state.memory
        last = min(max(h, -w_bar), w_bar)
        return state.model_copy(update={
            "step": state.step + 1, "load": h, "elastic": (h - last) / (self.n - 1), "last": last,
            "phase": Phase.UNLOADING if a > w_bar else Phase.FROZEN,
        })

    def energy(self, state: QuasistaticState) -> float:
        crack = self._j(state.last)
        if self.dissipation and state.memory > 0.0:
            crack = max(crack, self._j(state.memory))
        return ((self.n - 1) * self._j(state.elastic) + crack) / self.big_l


def quasistatic_step(state: QuasistaticState, next_load: float, eps: float, n: int,
                     dissipation: bool = True, threshold: Optional[float] = None) -> QuasistaticState:
    """One incremental minimization (builds a model; use QuasistaticModel.step in loops)"""
    return QuasistaticModel(eps, n, dissipation, threshold).step(state, next_load)


def _grid(tau: float, T: float) -> np.ndarray:
    if tau <= 0.0 or T <= 0.0:
        raise ValueError("tau and T must be positive")
    steps = int(math.floor(T / tau * (1.0 + 1e-12)))
    return np.arange(steps + 1) * tau


def quasistatic_run(eps: float, tau: float, load: LoadProgram, T: float, n: Optional[int] = None,
                    dissipation: bool = True) -> EvolutionTrace:
    """Iterate the incremental problems for k = 0..floor(T/tau)"""
    model = QuasistaticModel(eps, n, dissipation)
    times = _grid(tau, T)
    trace = EvolutionTrace(scheme="quasistatic")
    trace.metadata.update({
        "eps": eps, "n": model.n, "tau": tau, "T": T, "load": load.description,
        "h_tilde": model.threshold, "dissipation": dissipation,
        "negative_load_memory": "symmetric (|w| stored, sign restored on output)",
    })
    if eps <= 1e-2:
        th = thresholds(eps)
        trace.metadata.update({"p": th.p, "b": th.b, "c": th.c, "jump_threshold": th.jump_threshold})

    tracker = PhaseTracker()
    tracker.add_listener(lambda old, new, k, reason: trace.events.append(
        {"step": k, "t": float(times[k]), "from": old.value, "to": new.value, "reason": reason}))

    state = model.initial_state()
    previous_memory = 0.0
    for k, t in enumerate(times):
        if k > 0:
            state = model.step(state, load(float(t)))
            tracker.transition(state.phase, k, f"h={state.load:.6g}, w_bar={state.memory:.6g}")
        if state.memory < previous_memory:
            raise InvariantViolation("memory monotonicity", {"step": k, "memory": state.memory})
        previous_memory = state.memory
        jumps = (state.crack_index,) if abs(state.scaled_last) > 1.0 else ()
        trace.record(t, model.energy(state), jumps, load=state.load, w_last=state.last,
                     memory=state.memory, elastic=state.elastic,
                     frozen=float(state.phase is Phase.FROZEN))
        trace.keep_state(k, state)

    logger.info(f"🧱 Quasistatic run eps={eps:g} tau={tau:g}: {len(times)} steps, "
                f"{len(trace.events)} phase changes, final E={trace.energies[-1]:.6f}")
    return trace


# ============================================================================
# CLOSED-FORM AND CONTINUUM REFERENCES
# ============================================================================

def hat_energy_table(eps: float, t0: float, tau: float, T: float, n: Optional[int] = None) -> np.ndarray:
    """
    Minimal energies E^k for the hat load, branch by branch in time:
    uniform until h_tilde, one crack up to t0, then the memory w_bar frozen while
    the elastic springs carry h - w_bar (t <= t1), nothing (t1 < t <= t2) and
    h + w_bar (t > t2). Valid up to T = 3 t0.
    """
    if T > 3.0 * t0 + 1e-12:
        raise ValueError("the hat-load table covers T <= 3 t0 only")
    model = QuasistaticModel(eps, n)
    times = _grid(tau, T)
    loads = t0 - np.abs(times - t0)
    n_el = model.n - 1
    energies = np.empty_like(times)

    cracked_at = np.flatnonzero((times <= t0) & (loads > model.threshold))
    if cracked_at.size == 0:
        for k, h in enumerate(loads):
            energies[k] = model.uniform_energy(abs(h))
        return energies

    peak_index = int(np.argmax(loads))
    w_bar = model.overstretch(loads[peak_index])
    frozen = model._j(w_bar)
    for k, (t, h) in enumerate(zip(times, loads)):
        if k <= peak_index:
            energies[k] = model.uniform_energy(h) if h <= model.threshold else model.overstretch_energy(h)
        elif h >= w_bar:
            energies[k] = (n_el * model._j((h - w_bar) / n_el) + frozen) / model.big_l
        elif h >= -w_bar:
            energies[k] = frozen / model.big_l
        else:
            energies[k] = (n_el * model._j((h + w_bar) / n_el) + frozen) / model.big_l
    return energies


def ms_quasistatic_oracle(load: LoadProgram, T: float, dt: float) -> Dict[str, np.ndarray]:
    """E(t) = h(t)^2 until |h| first exceeds 1, then 1"""
    times = _grid(dt, T)
    h = load.sample(times)
    cracked = np.maximum.accumulate(np.abs(h) > 1.0)
    return {"times": times, "energies": np.where(cracked, 1.0, h * h)}


def quasistatic_convergence_table(load: LoadProgram, eps_list: Iterable[float], tau: float, T: float,
                                  slack: float = 0.05, n: Optional[int] = None,
                                  dissipation: bool = True) -> Dict[str, Any]:
    """
    sup_t |E_{tau,eps} - E| per eps; `monotone` asserts non-increasing gaps up to
    slack. The per-eps traces and the oracle come back for tabulation.
    """
    eps_values = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_values, eps_values[1:])):
        raise InvalidSpacingError("eps_list must be strictly decreasing")
    oracle = ms_quasistatic_oracle(load, T, tau)
    rows: List[Dict[str, float]] = []
    traces: List[EvolutionTrace] = []
    for eps in eps_values:
        trace = quasistatic_run(eps, tau, load, T, n, dissipation)
        traces.append(trace)
        gap = float(np.max(np.abs(trace.energy_array() - oracle["energies"])))
        rows.append({"eps": eps, "h_tilde": trace.metadata["h_tilde"], "sup_gap": gap})
    monotone = all(b["sup_gap"] <= (1.0 + slack) * a["sup_gap"] for a, b in zip(rows, rows[1:]))
    if not monotone:
        logger.error(f"❌ Quasistatic gaps not decreasing: {[r['sup_gap'] for r in rows]}")
    return {"rows": rows, "monotone": monotone, "traces": traces, "oracle": oracle}


def unloading_energy_constant(trace: EvolutionTrace, rtol: float = 1e-12) -> Dict[str, Any]:
    """
    While the load stays inside the frozen band |h| <= w_bar the elastic springs
    are relaxed and E^k equals the stored crack energy. Frozen steps are grouped
    by memory value and each group must carry a single energy.
    """
    frozen = trace.column("frozen") > 0.0
    energies = trace.energy_array()[frozen]
    memory = trace.column("memory")[frozen]
    spread = 0.0
    for w_bar in np.unique(memory):
        group = energies[memory == w_bar]
        spread = max(spread, float(np.max(group) - np.min(group)) / max(1.0, float(np.max(np.abs(group)))))
    holds = spread <= rtol
    if not holds:
        logger.error(f"❌ Energy varies by {spread:.3e} across frozen unloading steps")
    return {"frozen_steps": int(np.count_nonzero(frozen)), "spread": spread, "holds": holds}
