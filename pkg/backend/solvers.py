"""
PM-Lab Solvers
Damped Newton for tridiagonal systems, a contraction fallback, scalar root finders and RK4
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import bisect

from errors import BracketError, SolverDivergence

logger = logging.getLogger(__name__)

ARMIJO = 1e-4
MIN_STEP = 2.0 ** -30


@dataclass
class SolveReport:
    """Outcome of a vector solve"""

    solution: np.ndarray
    residual: float
    iterations: int
    method: str


def damped_newton_banded(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    tol: float,
    max_iters: int,
) -> SolveReport:
    """
    Newton with backtracking on the sup-norm of the residual.

    jacobian(x) returns the (1, 1)-banded layout expected by scipy.linalg.solve_banded.
    Raises SolverDivergence when the iteration cap is hit or the line search stalls.
    """
    x = np.array(x0, dtype=float)
    r = residual(x)
    norm = float(np.max(np.abs(r))) if r.size else 0.0

    for it in range(max_iters + 1):
        if norm <= tol:
            return SolveReport(x, norm, it, "newton")
        if it == max_iters:
            break

        step = solve_banded((1, 1), jacobian(x), -r, check_finite=False)
        t = 1.0
        while True:
            trial = x + t * step
            r_trial = residual(trial)
            norm_trial = float(np.max(np.abs(r_trial)))
            if norm_trial <= (1.0 - ARMIJO * t) * norm or norm_trial <= tol:
                break
            t *= 0.5
            if t < MIN_STEP:
                raise SolverDivergence(f"line search stalled at Newton iteration {it}", norm)
        x, r, norm = trial, r_trial, norm_trial
        logger.debug(f"newton it={it} step={t:g} residual={norm:.3e}")

    raise SolverDivergence(f"Newton did not converge in {max_iters} iterations", norm)


def richardson(
    residual: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    omega: float,
    tol: float,
    max_iters: int,
) -> SolveReport:
    """x <- x - omega R(x); a contraction when omega matches the Jacobian spectrum"""
    x = np.array(x0, dtype=float)
    norm = math.inf
    for it in range(max_iters + 1):
        r = residual(x)
        norm = float(np.max(np.abs(r)))
        if norm <= tol:
            return SolveReport(x, norm, it, "richardson")
        x = x - omega * r
    raise SolverDivergence(f"fixed-point iteration did not converge in {max_iters} iterations", norm)


def safeguarded_newton(
    fn: Callable[[float], float],
    dfn: Callable[[float], float],
    lo: float,
    hi: float,
    x0: Optional[float] = None,
    tol: float = 1e-13,
    max_iters: int = 200,
) -> Tuple[float, float]:
    """
    Scalar root in [lo, hi] with sign change; Newton steps that leave the
    current bracket fall back to bisection. Returns (root, |fn(root)|).
    """
    f_lo, f_hi = fn(lo), fn(hi)
    if f_lo == 0.0:
        return lo, 0.0
    if f_hi == 0.0:
        return hi, 0.0
    if f_lo * f_hi > 0.0:
        raise BracketError(f"no sign change on [{lo}, {hi}]: f={f_lo:.3e}, {f_hi:.3e}")

    x = 0.5 * (lo + hi) if x0 is None or not (lo < x0 < hi) else x0
    for _ in range(max_iters):
        fx = fn(x)
        if abs(fx) <= tol:
            return x, abs(fx)
        if fx * f_lo < 0.0:
            hi = x
        else:
            lo, f_lo = x, fx
        d = dfn(x)
        candidate = x - fx / d if d != 0.0 and math.isfinite(d) else math.nan
        if not (lo < candidate < hi):
            candidate = 0.5 * (lo + hi)
        if candidate == x or hi - lo <= 4.0 * math.ulp(max(abs(lo), abs(hi), 1e-300)):
            x = candidate
            break
        x = candidate
    fx = fn(x)
    return x, abs(fx)


def bracketed_bisection(fn: Callable[[float], float], lo: float, hi: float, xtol: float) -> float:
    """Bisection with an explicit bracket check"""
    f_lo, f_hi = fn(lo), fn(hi)
    if f_lo * f_hi > 0.0:
        raise BracketError(f"energies do not cross on [{lo:.6g}, {hi:.6g}] (gaps {f_lo:.3e}, {f_hi:.3e})")
    return float(bisect(fn, lo, hi, xtol=xtol, maxiter=500))


def rk4(
    rhs: Callable[[float], float],
    y0: float,
    dt: float,
    steps: int,
    keep: Callable[[float], bool],
) -> np.ndarray:
    """Classic RK4 for an autonomous scalar ODE; stops early once keep(y) is False"""
    out = [y0]
    y = y0
    for _ in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        if not keep(y):
            break
        out.append(y)
    return np.array(out)
