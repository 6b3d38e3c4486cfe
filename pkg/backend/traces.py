"""
PM-Lab Evolution Traces
Time-indexed record shared by the quasistatic and minimizing-movement schemes
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np


@dataclass
class EvolutionTrace:
    """
    Per-step scalars (times, energies, jump sets and named columns) plus states
    kept at a stride. `states` holds (step, state) pairs in increasing step order.
    """

    scheme: str
    times: List[float] = field(default_factory=list)
    energies: List[float] = field(default_factory=list)
    jump_sets: List[Tuple[int, ...]] = field(default_factory=list)
    # springs above the jump floor at every step (minimizing movements only)
    large_springs: List[Tuple[int, ...]] = field(default_factory=list)
    columns: Dict[str, List[float]] = field(default_factory=dict)
    states: List[Tuple[int, Any]] = field(default_factory=list)
    flux_snapshots: List[Tuple[int, np.ndarray]] = field(default_factory=list)
    events: List[Dict[str, Any]] = field(default_factory=list)
    violations: List[Dict[str, Any]] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)
    tainted: bool = False

    def record(self, t: float, energy: float, jumps, **columns: float) -> int:
        """Append one step; returns its index"""
        self.times.append(float(t))
        self.energies.append(float(energy))
        self.jump_sets.append(tuple(int(i) for i in jumps))
        for name, value in columns.items():
            self.columns.setdefault(name, []).append(float(value))
        return len(self.times) - 1

    def keep_state(self, step: int, state: Any) -> None:
        self.states.append((step, state))

    def flag(self, step: int, check: str, **details: Any) -> None:
        self.violations.append({"step": step, "check": check, **details})

    @property
    def steps(self) -> int:
        return len(self.times)

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.columns.get(name, []), dtype=float)

    def time_array(self) -> np.ndarray:
        return np.asarray(self.times, dtype=float)

    def energy_array(self) -> np.ndarray:
        return np.asarray(self.energies, dtype=float)

    def state_at(self, step: int) -> Optional[Any]:
        for k, s in self.states:
            if k == step:
                return s
        return None

    @property
    def final_state(self) -> Any:
        return self.states[-1][1] if self.states else None
