"""
PM-Lab Statics
Stationary points of F_eps under Dirichlet data u_0 = left, u_N = right, their
classification through the projected Hessian, and the Mumford-Shah local-minimum
pattern used as the continuum reference.
"""

import logging
import math
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from energy_core import (
    LatticeField,
    energy_terms,
    j_second,
    j_third,
    lattice_size,
    log_eps,
    pm_energy,
    pm_gradient,
    pm_hessian,
    scaled_gradients_of,
)
from errors import InvariantViolation, NotStationaryError
from piecewise import PiecewiseH1Function, ms_energy
from settings import get_settings

logger = logging.getLogger(__name__)

PRECONDITION_TOL = 1e-8
PERTURBATION_FLOOR = -1e-14


class BranchKind(Enum):
    UNIFORM_ELASTIC = "uniform-elastic"
    OVERSTRETCH_HIGH = "overstretch-w1"
    OVERSTRETCH_LOW = "overstretch-w2"
    DEGENERATE_THRESHOLD = "degenerate-threshold"
    OTHER = "other"


class Classification(Enum):
    LOCAL_MIN = "LocalMin"
    SADDLE = "Saddle"
    LOCAL_MAX = "LocalMax"
    DEGENERATE = "Degenerate"


class DirichletBC(BaseModel):
    """Boundary values u_0 = left and u_N = right (the load lambda is right - left)"""

    model_config = ConfigDict(frozen=True)

    left: float = 0.0
    right: float

    @field_validator("left", "right")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("boundary values must be finite")
        return v

    @property
    def load(self) -> float:
        return self.right - self.left


class StationaryProfile(BaseModel):
    """A stationary field with its multiplier, branch and classification"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    field: LatticeField
    multiplier: float
    kind: BranchKind
    classification: Classification
    hessian_min_eigenvalue: float
    stationarity_residual: float
    w: Optional[float] = None
    certificate: Dict[str, Any] = {}

    @property
    def energy(self) -> float:
        return pm_energy(self.field)

    @property
    def overstretched_springs(self) -> int:
        return int(np.sum(np.abs(scaled_gradients_of(self.field)) > 1.0))


# ============================================================================
# CLOSED FORMS
# ============================================================================

def critical_lambda(eps: float) -> float:
    """2 sqrt((1 - eps)/|log eps|): below it no overstretched stationary point exists"""
    return 2.0 * math.sqrt((1.0 - eps) / log_eps(eps))


def uniform_threshold(eps: float) -> float:
    """1/sqrt(eps |log eps|): largest load with every spring below the convexity threshold"""
    return 1.0 / math.sqrt(eps * log_eps(eps))


def overstretch_roots(eps: float, lam: float) -> List[float]:
    """Roots w1 >= w2 of (lam - w) w = (1 - eps)/|log eps|; empty when the discriminant is negative"""
    c = (1.0 - eps) / log_eps(eps)
    disc = lam * lam / 4.0 - c
    if disc < 0.0:
        return []
    w1 = lam / 2.0 + math.sqrt(disc)
    # Vieta for the small root
    w2 = c / w1
    return [w1, w2]


def in_admissible_set(eps: float, n: int, lam: float, w: float) -> bool:
    """Last spring past the convexity threshold, the other N-1 below it"""
    unit = math.sqrt(eps / log_eps(eps))
    return w >= unit and abs(lam - w) <= (n - 1) * unit


def _overstretch_values(n: int, lam: float, w: float, left: float) -> np.ndarray:
    z = (lam - w) / (n - 1)
    values = left + z * np.arange(n + 1, dtype=float)
    values[-1] = left + lam
    return values


# ============================================================================
# CLASSIFICATION
# ============================================================================

def classify_stationary(
    field: LatticeField,
    bc: DirichletBC,
    kind: BranchKind = BranchKind.OTHER,
    w: Optional[float] = None,
    perturbations: Optional[int] = None,
    magnitude: Optional[float] = None,
    seed: Optional[int] = None,
) -> StationaryProfile:
    """
    Classify a stationary field by the smallest eigenvalue of the Hessian
    restricted to interior nodes; LocalMin labels are cross-checked by random
    perturbations of the interior nodes.
    """
    settings = get_settings()
    if abs(field.values[0] - bc.left) > 1e-12 or abs(field.values[-1] - bc.right) > 1e-12 * max(1.0, abs(bc.right)):
        raise InvariantViolation("boundary data", {"u0": field.values[0], "uN": field.values[-1], "bc": bc.model_dump()})

    grad = pm_gradient(field)
    residual = float(np.max(np.abs(grad[1:-1]))) if field.n > 1 else 0.0
    if residual > PRECONDITION_TOL:
        raise NotStationaryError(residual, PRECONDITION_TOL)

    inner = pm_hessian(field).interior()
    lo = inner.min_eigenvalue()
    band = settings.degeneracy_band
    if abs(lo) < band:
        label = Classification.DEGENERATE
    elif lo > 0.0:
        label = Classification.LOCAL_MIN
    elif inner.max_eigenvalue() < -band:
        label = Classification.LOCAL_MAX
    else:
        label = Classification.SADDLE

    certificate: Dict[str, Any] = {}
    if label is Classification.LOCAL_MIN:
        count = settings.perturbation_count if perturbations is None else perturbations
        if count > 0:
            worst = perturbation_check(
                field,
                count,
                settings.perturbation_magnitude if magnitude is None else magnitude,
                settings.seed if seed is None else seed,
            )
            certificate["perturbation_min_delta"] = worst
            certificate["perturbations"] = count
            if worst < PERTURBATION_FLOOR:
                logger.error(f"❌ LocalMin label refuted by perturbation: delta={worst:.3e}")
                raise InvariantViolation("perturbation cross-check", {"min_delta": worst, "eigenvalue": lo})

    return StationaryProfile(
        field=field,
        multiplier=stationary_multiplier(field),
        kind=kind,
        classification=label,
        hessian_min_eigenvalue=lo,
        stationarity_residual=residual,
        w=w,
        certificate=certificate,
    )


def stationary_multiplier(field: LatticeField) -> float:
    """sigma = J'(w), shared by all springs of a stationary field (read off the last spring)"""
    w = scaled_gradients_of(field)
    return float(2.0 * w[-1] / (1.0 + w[-1] * w[-1]))


def perturbation_check(field: LatticeField, count: int, magnitude: float, seed: int, batch: int = 1000) -> float:
    """Smallest energy change over random interior perturbations with entries in [-m, m]"""
    rng = np.random.default_rng(seed)
    eps = field.spacing
    base_terms = energy_terms(field.values, eps)
    base = float(np.sum(base_terms))
    worst = math.inf
    done = 0
    while done < count:
        rows = min(batch, count - done)
        delta = np.zeros((rows, field.n + 1))
        delta[:, 1:-1] = rng.uniform(-magnitude, magnitude, (rows, field.n - 1))
        perturbed = field.values[None, :] + delta
        energies = np.sum(energy_terms(perturbed, eps), axis=-1)
        worst = min(worst, float(np.min(energies - base)))
        done += rows
    return worst


# ============================================================================
# BRANCHES
# ============================================================================

def uniform_branch(eps: float, bc: DirichletBC, n: int, **classify_kwargs) -> Optional[StationaryProfile]:
    """Linear profile; present only while every spring stays below the convexity threshold"""
    lam = bc.load
    if abs(lam) >= uniform_threshold(eps):
        return None
    values = bc.left + lam * np.arange(n + 1, dtype=float) / n
    values[-1] = bc.right
    field = LatticeField(n=n, values=values)
    return classify_stationary(field, bc, BranchKind.UNIFORM_ELASTIC, w=lam * eps, **classify_kwargs)


def overstretch_branches(eps: float, bc: DirichletBC, n: int, **classify_kwargs) -> List[StationaryProfile]:
    """
    Profiles with N-1 equal elastic springs and one overstretched last spring,
    built from the roots w1, w2 and kept when they lie in the admissible set.
    Negative loads reuse the positive construction reflected through bc.left.
    """
    lam = bc.load
    sign = -1.0 if lam < 0.0 else 1.0
    a = abs(lam)
    profiles = []
    for w, kind in zip(overstretch_roots(eps, a), (BranchKind.OVERSTRETCH_HIGH, BranchKind.OVERSTRETCH_LOW)):
        if not in_admissible_set(eps, n, a, w):
            logger.debug(f"root w={w:.6f} at lambda={lam} outside the admissible set")
            continue
        values = sign * _overstretch_values(n, a, w, 0.0) + bc.left
        values[-1] = bc.right
        field = LatticeField(n=n, values=values)
        profiles.append(classify_stationary(field, bc, kind, w=sign * w, **classify_kwargs))

    crit = critical_lambda(eps)
    for p in profiles:
        expected = (
            Classification.LOCAL_MIN
            if p.kind is BranchKind.OVERSTRETCH_HIGH and a > crit
            else Classification.SADDLE
        )
        if p.classification is not expected:
            logger.warning(
                f"⚠️ {p.kind.value} at lambda={lam:.4f}: Hessian says {p.classification.value}, "
                f"closed form says {expected.value}"
            )
    return profiles


def degenerate_threshold_case(eps: float, n: int, t: float = 1e-3) -> StationaryProfile:
    """
    All scaled gradients equal to 1 (load 1/sqrt(eps|log eps|)); the Hessian
    vanishes, and the cubic term along the direction stretching the last spring
    while relaxing the others is negative, so the point is not a minimum.
    """
    unit = math.sqrt(eps / log_eps(eps))
    values = unit * np.arange(n + 1, dtype=float)
    field = LatticeField(n=n, values=values)
    bc = DirichletBC(left=0.0, right=float(values[-1]))

    cubic = float(j_third(1.0)) * (1.0 - 1.0 / (n - 1) ** 2)
    direction = np.zeros(n + 1)
    direction[:n] = -np.arange(n, dtype=float) / (n - 1)
    perturbed = field.with_values(values + t * unit * direction)
    e0, e1 = pm_energy(field), pm_energy(perturbed)

    profile = classify_stationary(field, bc, BranchKind.DEGENERATE_THRESHOLD, w=unit, perturbations=0)
    certificate = {
        "cubic_coefficient": cubic,
        "perturbation_t": t,
        "energy_at_0": e0,
        "energy_at_t": e1,
        "energy_drop": e0 - e1,
    }
    return profile.model_copy(update={"certificate": certificate})


def relocate_overstretch(profile: StationaryProfile, index: int) -> LatticeField:
    """Move the overstretched (largest) increment to spring `index`"""
    du = profile.field.increments.copy()
    source = int(np.argmax(np.abs(du)))
    du[source], du[index] = du[index], du[source]
    values = np.concatenate([[profile.field.values[0]], profile.field.values[0] + np.cumsum(du)])
    return profile.field.with_values(values)


def two_spring_instability(eps: float, w: float) -> Dict[str, float]:
    """
    Two springs at equal scaled elongation w > 1: moving mass from one to the other
    changes J(w+s) + J(w-s) by J''(w) s^2 < 0, so such a configuration is not a minimum.
    """
    curvature = 2.0 * float(j_second(w))
    return {"w": w, "second_derivative": curvature, "unstable": curvature < 0.0}


# ============================================================================
# MUMFORD-SHAH REFERENCE
# ============================================================================

def ms_local_minima_energy(lam: float, max_jumps: int = 3) -> Dict[str, Any]:
    """Elastic family (lam x, energy lam^2) and piecewise-constant family (energy #jumps)"""
    elastic = lam * lam
    first = 2 if lam == 0.0 else 1
    jumping = list(range(first, max_jumps + 1))
    global_min = min(elastic, 1.0)
    return {
        "lambda": lam,
        "elastic": elastic,
        "jumping": jumping,
        "excluded_jump_counts": [1] if lam == 0.0 else [],
        "global_min": global_min,
        "global_minimizer": "elastic" if elastic <= 1.0 else "one-jump",
    }


def _constant(value: float):
    return lambda x: np.full_like(x, value, dtype=float)


def ms_jump_candidate(lam: float) -> PiecewiseH1Function:
    """Piecewise constant with the fewest jumps joining u(0) = 0 to u(1) = lam"""
    if lam != 0.0:
        return PiecewiseH1Function.step(0.5, height=lam)
    # a single jump cannot return to zero
    return PiecewiseH1Function.from_callables([0.25, 0.75], [_constant(0.0), _constant(1.0), _constant(0.0)],
                                              [_constant(0.0)] * 3)


def all_branches(eps: float, bc: DirichletBC, n: int, **classify_kwargs) -> List[StationaryProfile]:
    uniform = uniform_branch(eps, bc, n, **classify_kwargs)
    return ([uniform] if uniform else []) + overstretch_branches(eps, bc, n, **classify_kwargs)


def global_minimum_check(eps: float, lam: float, n: Optional[int] = None, tol: float = 0.05) -> Dict[str, Any]:
    n = lattice_size(eps) if n is None else n
    branches = all_branches(eps, DirichletBC(right=lam), n, perturbations=0)
    pm_min = min(p.energy for p in branches)
    ms = ms_local_minima_energy(lam)
    jump_candidate = ms_energy(ms_jump_candidate(lam))
    combined = min(pm_min, jump_candidate)
    return {
        "lambda": lam,
        "pm_branch_min": pm_min,
        "ms_candidate": jump_candidate,
        "combined": combined,
        "target": ms["global_min"],
        "holds": abs(combined - ms["global_min"]) <= tol,
    }


def local_minima_table(eps: float, lambdas: Iterable[float], n: int, **classify_kwargs) -> List[Dict[str, Any]]:
    """Rows (lambda, branch, w, energy, classification, hessian_min_eigenvalue) for a load sweep"""
    rows = []
    for lam in lambdas:
        lam = float(lam)
        for p in all_branches(eps, DirichletBC(right=lam), n, **classify_kwargs):
            if p.classification is Classification.LOCAL_MIN and p.overstretched_springs > 1:
                raise InvariantViolation("single overstretched spring", {"lambda": lam, "kind": p.kind.value})
            rows.append({
                "lambda": lam,
                "branch": p.kind.value,
                "w": p.w,
                "energy": p.energy,
                "classification": p.classification.value,
                "hessian_min_eigenvalue": p.hessian_min_eigenvalue,
            })
        rows.append({"lambda": lam, "branch": "ms-elastic", "w": math.nan, "energy": lam * lam,
                     "classification": Classification.LOCAL_MIN.value, "hessian_min_eigenvalue": math.nan})
        if lam != 0.0:
            rows.append({"lambda": lam, "branch": "ms-jump", "w": math.nan, "energy": ms_energy(ms_jump_candidate(lam)),
                         "classification": Classification.LOCAL_MIN.value, "hessian_min_eigenvalue": math.nan})
    logger.info(f"📊 Statics table: {len(rows)} rows at eps={eps:g}")
    return rows


def expected_local_minima(eps: float, lam: float, band: float = 1e-9) -> Optional[int]:
    """
    Lattice local minima at load lam: the uniform profile below uniform_threshold,
    plus w1 above critical_lambda. None within `band` of either threshold.
    """
    a = abs(lam)
    crit, top = critical_lambda(eps), uniform_threshold(eps)
    if abs(a - crit) <= band or abs(a - top) <= band:
        return None
    return int(a < top) + int(a > crit)


def local_minimum_counts(eps: float, rows: List[Dict[str, Any]]) -> Dict[str, Any]:
    """Per-load LocalMin counts of a local_minima_table against expected_local_minima"""
    counts: Dict[float, int] = {}
    for row in rows:
        counts.setdefault(row["lambda"], 0)
        if not row["branch"].startswith("ms-") and row["classification"] == Classification.LOCAL_MIN.value:
            counts[row["lambda"]] += 1
    table = [{"lambda": lam, "local_minima": found, "expected": expected_local_minima(eps, lam)}
             for lam, found in counts.items()]
    mismatched = [r["lambda"] for r in table if r["expected"] is not None and r["expected"] != r["local_minima"]]
    if mismatched:
        logger.error(f"❌ Local-minimum count off at lambda={mismatched[:5]}")
    return {"rows": table, "holds": not mismatched, "mismatched": mismatched}
