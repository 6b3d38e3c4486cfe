"""
PM-Lab Errors
Exception hierarchy shared by the numerical modules and the CLI
"""

from typing import Any, Dict, Optional


class PMLabError(Exception):
    """Base class for every lab error"""


class InvalidSpacingError(PMLabError, ValueError):
    """Lattice spacing outside (0, 1) or not a reciprocal integer"""


class JumpDensityError(PMLabError, ValueError):
    """A jump density g failed one of its admissibility conditions"""

    def __init__(self, condition: str, detail: str = ""):
        self.condition = condition
        self.detail = detail
        super().__init__(f"jump density violates '{condition}'" + (f": {detail}" if detail else ""))


class DirichletEnergyError(PMLabError):
    """Derivative of a piece is not square integrable"""


class NotStationaryError(PMLabError):
    """Field does not satisfy the interior stationarity equations"""

    def __init__(self, residual: float, tolerance: float):
        self.residual = residual
        self.tolerance = tolerance
        super().__init__(f"interior gradient sup-norm {residual:.3e} exceeds {tolerance:.1e}")


class NotCollapsedError(PMLabError, ValueError):
    """Mixed extension requested on a field that still has intermediate springs"""


class BracketError(PMLabError):
    """Root is not bracketed by the given interval"""


class SolverDivergence(PMLabError):
    """Iterative solver stopped without reaching its tolerance"""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (last residual {residual:.3e})")


class StabilityError(PMLabError, ValueError):
    """Time step violates 4 tau / eps^2 < 1 without override"""


class SingularityError(PMLabError, ValueError):
    """Limit ODE started inside its singularity guard"""


class InvariantViolation(PMLabError):
    """A checked structural property failed"""

    def __init__(self, invariant: str, details: Optional[Dict[str, Any]] = None):
        self.invariant = invariant
        self.details = details or {}
        super().__init__(f"invariant '{invariant}' violated: {self.details}")


class ConfigError(PMLabError):
    """Malformed experiment config"""

    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(f"{prefix}{message}")
