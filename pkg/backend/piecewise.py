"""
PM-Lab Piecewise-H1 Functions
Continuum functions on [0,1] with a finite jump set, the domain of the Mumford-Shah energy
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy import integrate

from errors import DirichletEnergyError

logger = logging.getLogger(__name__)

QUAD_TOL = 1e-10
CALLABLE_SAMPLES = 65_537
# refinement levels for pieces without a derivative; each is 4x the previous
REFINEMENT_LEVELS = (4_097, 16_385, 65_537)
DIVERGENCE_RATIO = 0.9


@dataclass(frozen=True)
class SampledPiece:
    """Continuous piecewise-linear profile through (knots, values)"""

    knots: np.ndarray
    values: np.ndarray

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return np.interp(x, self.knots, self.values)

    def dirichlet(self, a: float, b: float) -> float:
        dx = np.diff(self.knots)
        if np.any(dx <= 0.0):
            raise DirichletEnergyError("sampled piece has repeated knots")
        # exact for the linear interpolant
        return float(np.sum(np.diff(self.values) ** 2 / dx))

    def integral(self, a: float, b: float) -> float:
        return float(integrate.trapezoid(self.values, self.knots))


@dataclass(frozen=True)
class CallablePiece:
    """Profile given by a vectorized callable, optionally with its derivative"""

    fn: Callable[[np.ndarray], np.ndarray]
    derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.fn(x), dtype=float), x.shape).copy()

    def sampled(self, a: float, b: float, count: int = CALLABLE_SAMPLES) -> SampledPiece:
        x = np.linspace(a, b, count)
        return SampledPiece(x, self.evaluate(x))

    def dirichlet(self, a: float, b: float) -> float:
        if self.derivative is None:
            return self._refined_dirichlet(a, b)
        deriv = self.derivative
        return _quad(lambda s: float(np.asarray(deriv(np.array([s])), dtype=float)[0]) ** 2, a, b)

    def _refined_dirichlet(self, a: float, b: float) -> float:
        """
        Dirichlet integral of the linear interpolant on successively finer grids.
        Increments that fail to shrink mean the integral grows without bound.
        """
        with np.errstate(divide="ignore", invalid="ignore"):
            levels = [self.sampled(a, b, count).dirichlet(a, b) for count in REFINEMENT_LEVELS]
        if not np.all(np.isfinite(levels)):
            raise DirichletEnergyError(f"derivative is not square-integrable on [{a}, {b}]")
        first, second = levels[1] - levels[0], levels[2] - levels[1]
        if second > 1e-12 * max(1.0, levels[2]) and second >= DIVERGENCE_RATIO * first:
            raise DirichletEnergyError(
                f"Dirichlet integral on [{a}, {b}] keeps growing under refinement "
                f"({levels[0]:.6g}, {levels[1]:.6g}, {levels[2]:.6g}); u' is not square-integrable")
        return float(levels[-1])

    def integral(self, a: float, b: float) -> float:
        fn = self.fn
        return _quad(lambda s: float(np.broadcast_to(np.asarray(fn(np.array([s])), dtype=float), (1,))[0]), a, b)


Piece = Union[SampledPiece, CallablePiece]


def _quad(integrand: Callable[[float], float], a: float, b: float) -> float:
    """Adaptive quadrature; any quadrature warning means the integral is not trustworthy"""
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, _ = integrate.quad(integrand, a, b, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
        except (integrate.IntegrationWarning, ZeroDivisionError, OverflowError) as e:
            raise DirichletEnergyError(f"integral on [{a}, {b}] failed: {e}") from e
    if not np.isfinite(value):
        raise DirichletEnergyError(f"integral on [{a}, {b}] is not finite")
    return float(value)


class PiecewiseH1Function(BaseModel):
    """H1 pieces separated by jumps at sorted positions strictly inside (0, 1)"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    jumps: np.ndarray
    pieces: Tuple[Any, ...]

    @field_validator("jumps", mode="before")
    @classmethod
    def _as_array(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=np.float64).reshape(-1)
        if np.any(np.diff(arr) <= 0.0):
            raise ValueError("jump positions must be strictly increasing")
        if arr.size and (arr[0] <= 0.0 or arr[-1] >= 1.0):
            raise ValueError("jump positions must lie strictly inside (0, 1)")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def _check_pieces(self) -> "PiecewiseH1Function":
        if len(self.pieces) != self.jumps.size + 1:
            raise ValueError(f"{self.jumps.size} jumps need {self.jumps.size + 1} pieces, got {len(self.pieces)}")
        for (a, b), piece in zip(self.intervals(), self.pieces):
            if not isinstance(piece, (SampledPiece, CallablePiece)):
                raise ValueError(f"unsupported piece type {type(piece).__name__}")
            if isinstance(piece, SampledPiece):
                k = piece.knots
                if k.size < 2 or k[0] > a + 1e-12 or k[-1] < b - 1e-12:
                    raise ValueError(f"sampled piece does not cover [{a}, {b}]")
        return self

    # -- construction ---------------------------------------------------------

    @classmethod
    def from_callables(
        cls,
        jumps: Sequence[float],
        fns: Sequence[Callable],
        derivatives: Optional[Sequence[Optional[Callable]]] = None,
    ) -> "PiecewiseH1Function":
        derivatives = derivatives or [None] * len(fns)
        return cls(jumps=list(jumps), pieces=tuple(CallablePiece(f, d) for f, d in zip(fns, derivatives)))

    @classmethod
    def smooth(cls, fn: Callable, derivative: Optional[Callable] = None) -> "PiecewiseH1Function":
        return cls.from_callables([], [fn], [derivative])

    @classmethod
    def affine(cls, slope: float, offset: float = 0.0) -> "PiecewiseH1Function":
        return cls.smooth(lambda x: offset + slope * x, lambda x: np.full_like(x, slope, dtype=float))

    @classmethod
    def step(cls, position: float, height: float = 1.0, base: float = 0.0) -> "PiecewiseH1Function":
        zero = lambda x: np.zeros_like(x, dtype=float)
        return cls.from_callables(
            [position],
            [lambda x: np.full_like(x, base, dtype=float), lambda x: np.full_like(x, base + height, dtype=float)],
            [zero, zero],
        )

    # -- geometry -------------------------------------------------------------

    def intervals(self) -> List[Tuple[float, float]]:
        edges = [0.0, *self.jumps.tolist(), 1.0]
        return list(zip(edges[:-1], edges[1:]))

    @property
    def jump_count(self) -> int:
        return int(self.jumps.size)

    # -- evaluation -----------------------------------------------------------

    def evaluate(self, x) -> np.ndarray:
        """Right-continuous at jumps"""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1)
        order = np.argsort(flat, kind="stable")
        xs = flat[order]
        cuts = np.searchsorted(xs, self.jumps, side="left")
        bounds = [0, *cuts.tolist(), xs.size]
        out_sorted = np.empty_like(xs)
        for piece, lo, hi in zip(self.pieces, bounds[:-1], bounds[1:]):
            if hi > lo:
                out_sorted[lo:hi] = piece.evaluate(xs[lo:hi])
        out = np.empty_like(flat)
        out[order] = out_sorted
        return out.reshape(x.shape)

    def sample(self, n: int) -> np.ndarray:
        """Node values at i/n, i = 0..n"""
        return self.evaluate(np.arange(n + 1) / n)

    def traces(self) -> Tuple[np.ndarray, np.ndarray]:
        """(u-, u+) at every jump; u- is read just left of the jump"""
        left = np.array([float(p.evaluate(np.array([np.nextafter(x, 0.0)]))[0])
                         for p, x in zip(self.pieces[:-1], self.jumps)])
        right = np.array([float(p.evaluate(np.array([x]))[0]) for p, x in zip(self.pieces[1:], self.jumps)])
        return left, right

    def jump_sizes(self) -> np.ndarray:
        if not self.jumps.size:
            return np.zeros(0)
        left, right = self.traces()
        return np.abs(right - left)

    def dirichlet_energy(self) -> float:
        return float(sum(p.dirichlet(a, b) for p, (a, b) in zip(self.pieces, self.intervals())))

    def piece_integrals(self) -> np.ndarray:
        return np.array([p.integral(a, b) for p, (a, b) in zip(self.pieces, self.intervals())])


def ms_energy(u: PiecewiseH1Function) -> float:
    """M_s(u) = int |u'|^2 + #S(u)"""
    return u.dirichlet_energy() + u.jump_count
