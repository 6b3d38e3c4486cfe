"""
PM-Lab Energy Core
The potential J, the scaled spring energy f_eps, the lattice functional F_eps with
its gradient and Hessian, Mumford-Shah probes and the Gamma-equivalent family G_eps.

Notation: a field on the lattice eps*Z in [0,1] has N+1 node values u_0..u_N and N
springs; spring i (0-based) joins nodes i and i+1.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.linalg import eigvalsh_tridiagonal

from errors import InvalidSpacingError, JumpDensityError
from piecewise import PiecewiseH1Function, ms_energy

logger = logging.getLogger(__name__)

# sizes at and above which energies use exactly rounded summation
COMPENSATED_SUM_SIZE = 100_000


# ============================================================================
# POTENTIAL J AND SCALED SPRING ENERGY
# ============================================================================

def j_potential(z):
    """J(z) = log(1 + z^2)"""
    z = np.asarray(z, dtype=float)
    return np.log1p(z * z)


def j_prime(z):
    z = np.asarray(z, dtype=float)
    return 2.0 * z / (1.0 + z * z)


def j_second(z):
    z = np.asarray(z, dtype=float)
    zz = z * z
    return 2.0 * (1.0 - zz) / (1.0 + zz) ** 2


def j_third(z):
    z = np.asarray(z, dtype=float)
    zz = z * z
    return -4.0 * z * (3.0 - zz) / (1.0 + zz) ** 3


def log_eps(eps: float) -> float:
    """|log eps| for a spacing in (0, 1)"""
    if not (0.0 < eps < 1.0) or not math.isfinite(eps):
        raise InvalidSpacingError(f"spacing must lie in (0, 1), got {eps!r}")
    return -math.log(eps)


def lattice_size(eps: float) -> int:
    """Recover N from eps = 1/N"""
    log_eps(eps)
    n = int(round(1.0 / eps))
    if n < 2 or abs(n * eps - 1.0) > 1e-9:
        raise InvalidSpacingError(f"spacing {eps!r} is not 1/N for an integer N >= 2")
    return n


def _scale(eps: float) -> float:
    """sqrt(eps |log eps|)"""
    return math.sqrt(eps * log_eps(eps))


def f_eps(eps: float, u):
    """f_eps(u) = J(sqrt(eps L) u) / (eps L), L = |log eps|"""
    a = _scale(eps)
    return j_potential(a * np.asarray(u, dtype=float)) / (a * a)


def f_eps_prime(eps: float, u):
    a = _scale(eps)
    return j_prime(a * np.asarray(u, dtype=float)) / a


def f_eps_second(eps: float, u):
    a = _scale(eps)
    return j_second(a * np.asarray(u, dtype=float))


# ============================================================================
# LATTICE TYPES
# ============================================================================

class LatticeField(BaseModel):
    """Node values u_0..u_N on the lattice of spacing 1/N"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    n: int = Field(..., ge=2)
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _as_array(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ValueError("values must be finite")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def _check_length(self) -> "LatticeField":
        if self.values.shape[0] != self.n + 1:
            raise ValueError(f"expected {self.n + 1} node values, got {self.values.shape[0]}")
        return self

    @property
    def spacing(self) -> float:
        return 1.0 / self.n

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.spacing

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "LatticeField":
        arr = np.asarray(values, dtype=np.float64)
        return cls(n=arr.shape[0] - 1, values=arr)

    @classmethod
    def constant(cls, n: int, value: float = 0.0) -> "LatticeField":
        return cls(n=n, values=np.full(n + 1, float(value)))

    @classmethod
    def linear(cls, n: int, slope: float, offset: float = 0.0) -> "LatticeField":
        return cls(n=n, values=offset + slope * np.arange(n + 1) / n)

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], n: int) -> "LatticeField":
        x = np.arange(n + 1) / n
        return cls(n=n, values=np.broadcast_to(fn(x), x.shape))

    def with_values(self, values: np.ndarray) -> "LatticeField":
        return LatticeField(n=self.n, values=values)


class ScaledGradients(BaseModel):
    """w_i = sqrt(|log eps|/eps) (u_i - u_{i-1}) for a source field"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    field: LatticeField
    w: np.ndarray

    @model_validator(mode="after")
    def _check_source(self) -> "ScaledGradients":
        expected = scaled_gradients_of(self.field)
        w = np.asarray(self.w, dtype=float)
        if w.shape != expected.shape or not np.allclose(w, expected, rtol=1e-12, atol=0.0):
            raise ValueError("scaled gradients do not match the source field")
        return self

    @classmethod
    def from_field(cls, field: LatticeField) -> "ScaledGradients":
        return cls(field=field, w=scaled_gradients_of(field))


def scaled_gradients_of(field: LatticeField) -> np.ndarray:
    eps = field.spacing
    return math.sqrt(log_eps(eps) / eps) * field.increments


@dataclass(frozen=True)
class SymmetricTridiagonal:
    """Symmetric tridiagonal matrix stored by its two bands"""

    diagonal: np.ndarray
    offdiagonal: np.ndarray

    @property
    def size(self) -> int:
        return self.diagonal.shape[0]

    def toarray(self) -> np.ndarray:
        return np.diag(self.diagonal) + np.diag(self.offdiagonal, 1) + np.diag(self.offdiagonal, -1)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diagonal * x
        y[:-1] += self.offdiagonal * x[1:]
        y[1:] += self.offdiagonal * x[:-1]
        return y

    def banded(self, shift: float = 0.0, scale: float = 1.0) -> np.ndarray:
        """(shift I + scale A) in scipy.linalg.solve_banded (1, 1) layout"""
        ab = np.zeros((3, self.size))
        ab[0, 1:] = scale * self.offdiagonal
        ab[1, :] = shift + scale * self.diagonal
        ab[2, :-1] = scale * self.offdiagonal
        return ab

    def interior(self) -> "SymmetricTridiagonal":
        """Block acting on nodes 1..N-1 (endpoints held fixed)"""
        return SymmetricTridiagonal(self.diagonal[1:-1], self.offdiagonal[1:-1])

    def min_eigenvalue(self) -> float:
        if self.size == 1:
            return float(self.diagonal[0])
        return float(eigvalsh_tridiagonal(self.diagonal, self.offdiagonal, select="i", select_range=(0, 0))[0])

    def max_eigenvalue(self) -> float:
        if self.size == 1:
            return float(self.diagonal[0])
        top = self.size - 1
        return float(eigvalsh_tridiagonal(self.diagonal, self.offdiagonal, select="i", select_range=(top, top))[0])


# ============================================================================
# LATTICE FUNCTIONAL F_eps
# ============================================================================

def energy_terms(values: np.ndarray, eps: float) -> np.ndarray:
    """Per-spring terms (1/L) J(sqrt(L/eps) du); works row-wise on 2-D batches"""
    big_l = log_eps(eps)
    w = math.sqrt(big_l / eps) * np.diff(values, axis=-1)
    return np.log1p(w * w) / big_l


def lattice_energy(values: np.ndarray, eps: float) -> float:
    terms = energy_terms(values, eps)
    if terms.size >= COMPENSATED_SUM_SIZE:
        return math.fsum(terms)
    return float(np.sum(terms))


def lattice_gradient(values: np.ndarray, eps: float) -> np.ndarray:
    flux = f_eps_prime(eps, np.diff(values) / eps)
    grad = np.zeros_like(values, dtype=float)
    grad[:-1] -= flux
    grad[1:] += flux
    return grad


def lattice_hessian(values: np.ndarray, eps: float) -> SymmetricTridiagonal:
    k = f_eps_second(eps, np.diff(values) / eps) / eps
    diag = np.zeros(values.shape[0])
    diag[:-1] += k
    diag[1:] += k
    return SymmetricTridiagonal(diag, -k)


def pm_energy(field: LatticeField) -> float:
    """F_eps(u) = sum_i eps f_eps((u_i - u_{i-1})/eps)"""
    return lattice_energy(field.values, field.spacing)


def pm_gradient(field: LatticeField) -> np.ndarray:
    return lattice_gradient(field.values, field.spacing)


def pm_hessian(field: LatticeField) -> SymmetricTridiagonal:
    return lattice_hessian(field.values, field.spacing)


def dirichlet_lower_bound(field: LatticeField) -> Dict[str, Any]:
    """F_eps >= log 2 * (discrete Dirichlet energy over springs with |w_i| <= 1)"""
    eps = field.spacing
    du = field.increments
    w = scaled_gradients_of(field)
    mask = np.abs(w) <= 1.0
    rhs = math.log(2.0) * float(np.sum(du[mask] ** 2)) / eps
    lhs = pm_energy(field)
    return {"lhs": lhs, "rhs": rhs, "holds": lhs >= rhs * (1.0 - 1e-12)}


def sample_field(u: PiecewiseH1Function, n: int) -> LatticeField:
    """Node samples; a node sitting on a jump takes the right trace"""
    return LatticeField(n=n, values=u.sample(n))


# ============================================================================
# JUMP DENSITIES AND G_eps
# ============================================================================

GROWTH_CHECKS = ((1e3, 0.25), (1e6, 0.1), (1e9, 0.05))


class ConcaveJumpDensity(BaseModel):
    """Jump density g for G_eps; g and its derivatives must accept numpy arrays"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str
    g: Callable[[Any], Any]
    g_prime: Callable[[Any], Any]
    g_second: Optional[Callable[[Any], Any]] = None

    def violations(self, include_growth: bool = True) -> List[str]:
        """Names of every failed admissibility condition"""
        failed = []
        if abs(float(self.g(0.0))) > 1e-8:
            failed.append("g(0)=0")
        if abs(float(self.g_prime(0.0)) - 1.0) > 1e-8:
            failed.append("g'(0)=1")

        grid = np.concatenate([[0.0], np.geomspace(1e-6, 1e9, 400)])
        slopes = np.asarray(self.g_prime(grid), dtype=float)
        rises = np.diff(slopes)
        if np.any(rises > 1e-12 * (1.0 + np.abs(slopes[:-1]))):
            failed.append("concavity")

        if include_growth:
            for w, tol in GROWTH_CHECKS:
                ratio = float(self.g(w)) / (2.0 * math.log(w))
                if abs(ratio - 1.0) > tol:
                    failed.append("logarithmic growth")
                    break
        return failed

    def check(self, include_growth: bool = True) -> None:
        failed = self.violations(include_growth)
        if failed:
            logger.error(f"❌ Jump density '{self.name}' rejected: {failed}")
            raise JumpDensityError(failed[0], f"density '{self.name}' fails {', '.join(failed)}")

    def second(self, w):
        """g'' (central difference of g' when no closed form is supplied)"""
        if self.g_second is not None:
            return self.g_second(w)
        w = np.asarray(w, dtype=float)
        h = 1e-6 * (1.0 + np.abs(w))
        return (self.g_prime(w + h) - self.g_prime(w - h)) / (2.0 * h)


def log_density() -> ConcaveJumpDensity:
    """g(w) = 2 log(1 + w/2)"""
    return ConcaveJumpDensity(
        name="2log(1+w/2)",
        g=lambda w: 2.0 * np.log1p(np.asarray(w, dtype=float) / 2.0),
        g_prime=lambda w: 2.0 / (2.0 + np.asarray(w, dtype=float)),
        g_second=lambda w: -2.0 / (2.0 + np.asarray(w, dtype=float)) ** 2,
    )


def bounded_density() -> ConcaveJumpDensity:
    """g(w) = w / (1 + w); bounded, so it fails the growth condition"""
    return ConcaveJumpDensity(
        name="w/(1+w)",
        g=lambda w: np.asarray(w, dtype=float) / (1.0 + np.asarray(w, dtype=float)),
        g_prime=lambda w: 1.0 / (1.0 + np.asarray(w, dtype=float)) ** 2,
        g_second=lambda w: -2.0 / (1.0 + np.asarray(w, dtype=float)) ** 3,
    )


def jump_cost(g: ConcaveJumpDensity, size, eps: float):
    """(1/L) g(sqrt(L/eps) |size|)"""
    big_l = log_eps(eps)
    return g.g(math.sqrt(big_l / eps) * np.abs(np.asarray(size, dtype=float))) / big_l


def g_eps_energy(u: PiecewiseH1Function, eps: float, g: ConcaveJumpDensity) -> float:
    """G_eps(u) = int |u'|^2 + sum over jumps of (1/L) g(sqrt(L/eps)|u+ - u-|)"""
    g.check()
    dirichlet = u.dirichlet_energy()
    sizes = u.jump_sizes()
    jumps = float(np.sum(jump_cost(g, sizes, eps))) if sizes.size else 0.0
    return dirichlet + jumps


def merge_gain(g: ConcaveJumpDensity, a: float, b: float, eps: float) -> float:
    """Jump part of two jumps minus the jump part of their merger (>= 0 for concave g)"""
    return float(jump_cost(g, a, eps) + jump_cost(g, b, eps) - jump_cost(g, abs(a) + abs(b), eps))


def gamma_probe(u: PiecewiseH1Function, eps_list: Iterable[float]) -> List[Dict[str, float]]:
    """Table of (eps, F_eps(sample_eps(u)), M_s(u), gap)"""
    eps_values = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_values, eps_values[1:])):
        raise InvalidSpacingError("eps_list must be strictly decreasing")

    target = ms_energy(u)
    rows = []
    for eps in eps_values:
        n = lattice_size(eps)
        value = pm_energy(sample_field(u, n))
        rows.append({"eps": eps, "n": n, "pm_energy": value, "ms_energy": target, "gap": abs(value - target)})
        logger.debug(f"gamma probe eps={eps:.1e}: F={value:.6f} M={target:.6f}")
    logger.info(f"📐 Gamma probe over {len(rows)} spacings, final gap {rows[-1]['gap'] if rows else float('nan'):.4e}")
    return rows
