"""
PM-Lab Interpolation
Jump detection, the thresholds b_eps and c_eps, the spring partition, the Chambolle
interpolation, the collapse of intermediate springs and the mixed affine/constant
extension with its Mumford-Shah lower bound.

Spring i (0-based) joins nodes i and i+1; a constant cell i with a jump puts the
discontinuity at x = (i+1) eps.
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from energy_core import LatticeField, log_eps, pm_energy
from errors import InvalidSpacingError, InvariantViolation, NotCollapsedError
from piecewise import PiecewiseH1Function, SampledPiece

logger = logging.getLogger(__name__)

MAX_SPACING = 1e-2


class InterpolationThresholds(BaseModel):
    """Thresholds on elongation/eps; p(eps) = (log|log eps|)^2 / |log eps|"""

    model_config = ConfigDict(frozen=True)

    eps: float
    jump_threshold: float
    b: float
    c: float
    p: float

    @property
    def lower(self) -> float:
        """Lower edge of the intermediate window, b / sqrt(eps |log eps|)"""
        return self.b / math.sqrt(self.eps * log_eps(self.eps))

    @property
    def upper(self) -> float:
        """Upper edge of the intermediate window, c / eps"""
        return self.c / self.eps

    @model_validator(mode="after")
    def _window(self) -> "InterpolationThresholds":
        if not self.lower < self.upper:
            raise ValueError(f"empty intermediate window at eps={self.eps}: {self.lower} >= {self.upper}")
        if self.eps <= MAX_SPACING and not self.c * log_eps(self.eps) < 1.0:
            raise ValueError(f"c_eps |log eps| = {self.c * log_eps(self.eps)} is not below 1")
        return self


def thresholds(eps: float) -> InterpolationThresholds:
    if not (0.0 < eps <= MAX_SPACING):
        raise InvalidSpacingError(f"thresholds need 0 < eps <= {MAX_SPACING}, got {eps!r}")
    big_l = log_eps(eps)
    p = math.log(big_l) ** 2 / big_l
    return InterpolationThresholds(
        eps=eps,
        jump_threshold=1.0 / math.sqrt(eps * big_l),
        b=(eps * big_l) ** 0.25,
        c=eps ** p,
        p=p,
    )


class IndexPartition(BaseModel):
    """Spring index sets I^j, I^1, I^2, I^3"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    n: int
    jump_set: np.ndarray
    intermediate: np.ndarray
    flat: np.ndarray
    steep: np.ndarray

    @field_validator("jump_set", "intermediate", "flat", "steep", mode="before")
    @classmethod
    def _as_index(cls, v: Any) -> np.ndarray:
        arr = np.asarray(v, dtype=np.int64).reshape(-1)
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def _partition(self) -> "IndexPartition":
        if np.intersect1d(self.flat, self.steep).size:
            raise ValueError("flat and steep springs overlap")
        if self.flat.size + self.steep.size != self.n:
            raise ValueError("flat and steep springs do not cover every spring")
        return self

    @property
    def m(self) -> int:
        return int(self.intermediate.size)


def _quotients(field: LatticeField) -> np.ndarray:
    return np.abs(field.increments) / field.spacing


def jump_springs(field: LatticeField) -> np.ndarray:
    """Springs with elongation/eps above 1/sqrt(eps |log eps|)"""
    eps = field.spacing
    return np.flatnonzero(_quotients(field) > 1.0 / math.sqrt(eps * log_eps(eps)))


def partition_indices(field: LatticeField, th: InterpolationThresholds) -> IndexPartition:
    """
    I^j: q > jump threshold; I^1: lower <= q <= upper.
    I^2 and I^3 are read on the collapsed field, where the window is empty, so
    that they partition every spring (q <= lower and q >= upper respectively).
    """
    q = _quotients(field)
    jump = np.flatnonzero(q > th.jump_threshold)
    window = (q >= th.lower) & (q <= th.upper)
    q_collapsed = np.where(window, 0.0, q)
    return IndexPartition(
        n=field.n,
        jump_set=jump,
        intermediate=np.flatnonzero(window),
        flat=np.flatnonzero(q_collapsed <= th.lower),
        steep=np.flatnonzero(q_collapsed >= th.upper),
    )


def partition_labels(partition: IndexPartition) -> List[List[str]]:
    labels: List[List[str]] = [[] for _ in range(partition.n)]
    for name, idx in (("Ij", partition.jump_set), ("I1", partition.intermediate),
                      ("I2", partition.flat), ("I3", partition.steep)):
        for i in idx.tolist():
            labels[i].append(name)
    return labels


def dump_partition(partition: IndexPartition, path: Union[str, Path], th: InterpolationThresholds) -> Path:
    """Per-index labels as JSON for forensics"""
    path = Path(path)
    payload = {
        "n": partition.n,
        "thresholds": th.model_dump(),
        "window": [th.lower, th.upper],
        "labels": partition_labels(partition),
    }
    path.write_text(json.dumps(payload, indent=1))
    logger.debug(f"partition dump written to {path}")
    return path


def cellwise_extension(values: np.ndarray, constant_cells: np.ndarray) -> PiecewiseH1Function:
    """
    Constant on the marked cells, affine on the others. A constant cell i < N-1
    whose neighbour value differs opens a jump at (i+1)/N; the last cell never does.
    """
    n = values.shape[0] - 1
    constant = np.zeros(n, dtype=bool)
    constant[np.asarray(constant_cells, dtype=np.int64)] = True
    cells = np.arange(n)
    opens = constant & (cells < n - 1) & (values[1:] != values[:-1])
    jump_cells = np.flatnonzero(opens)

    starts = np.concatenate([[0], jump_cells + 1])
    ends = np.concatenate([jump_cells + 1, [n]])
    pieces = []
    for s, e in zip(starts.tolist(), ends.tolist()):
        knots = np.arange(s, e + 1, dtype=float) / n
        v = values[s:e + 1].copy()
        if constant[e - 1]:
            v[-1] = values[e - 1]
        pieces.append(SampledPiece(knots, v))
    return PiecewiseH1Function(jumps=(jump_cells + 1) / n, pieces=tuple(pieces))


def chambolle_interpolation(field: LatticeField, th: InterpolationThresholds) -> PiecewiseH1Function:
    """Piecewise constant on jump springs, affine elsewhere"""
    return cellwise_extension(field.values, jump_springs_for(field, th))


def jump_springs_for(field: LatticeField, th: InterpolationThresholds) -> np.ndarray:
    return np.flatnonzero(_quotients(field) > th.jump_threshold)


def collapse_intermediate(field: LatticeField, th: InterpolationThresholds) -> LatticeField:
    """
    Remove every intermediate increment left to right: each removal shifts the
    tail of the field by the collapsed increment, other increments are untouched.
    """
    q = _quotients(field)
    window = (q >= th.lower) & (q <= th.upper)
    if not np.any(window):
        return field
    shifts = np.where(window, field.increments, 0.0)
    values = field.values.copy()
    values[1:] -= np.cumsum(shifts)
    collapsed = field.with_values(values)
    logger.debug(f"collapsed {int(window.sum())} intermediate springs")
    return collapsed


def mixed_extension(field: LatticeField, th: InterpolationThresholds) -> PiecewiseH1Function:
    """Affine on flat springs, constant on steep springs; input must be collapsed"""
    partition = partition_indices(field, th)
    if partition.m:
        raise NotCollapsedError(f"{partition.m} intermediate springs remain; collapse first")
    return cellwise_extension(field.values, partition.steep)


def ms_lower_bound_check(field: LatticeField, th: InterpolationThresholds, delta: float) -> Dict[str, Any]:
    """F_eps(u) >= (1 - delta)(int |w'|^2 + #S(w)) with w the mixed extension of the collapsed field"""
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    extension = mixed_extension(collapse_intermediate(field, th), th)
    dirichlet = extension.dirichlet_energy()
    rhs = (1.0 - delta) * (dirichlet + extension.jump_count)
    lhs = pm_energy(field)
    return {"lhs": lhs, "rhs": rhs, "dirichlet": dirichlet, "jumps": extension.jump_count, "holds": lhs >= rhs}


def jump_count_bound(field: LatticeField, th: InterpolationThresholds) -> Dict[str, float]:
    """#I^j <= F_eps(u) |log eps| / log 2"""
    count = int(jump_springs_for(field, th).size)
    bound = pm_energy(field) * log_eps(field.spacing) / math.log(2.0)
    if count > bound + 1e-9:
        raise InvariantViolation("jump count bound", {"count": count, "bound": bound})
    return {"count": count, "bound": bound}


def interpolation_distance(field: LatticeField, th: InterpolationThresholds) -> Dict[str, Any]:
    """Sup distance between the Chambolle interpolation and the piecewise-constant extension"""
    du = np.abs(field.increments)
    affine = np.ones(field.n, dtype=bool)
    affine[jump_springs_for(field, th)] = False
    sup = float(du[affine].max()) if np.any(affine) else 0.0
    bound = math.sqrt(field.spacing / log_eps(field.spacing))
    return {"sup": sup, "bound": bound, "holds": sup <= bound * (1.0 + 1e-12)}
