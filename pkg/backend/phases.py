"""
PM-Lab Quasistatic Phases
Tracks the regime of a load-driven evolution and broadcasts transitions
"""

import logging
from enum import Enum
from typing import Callable, List, Optional

logger = logging.getLogger(__name__)


class Phase(Enum):
    """Quasistatic regimes"""
    ELASTIC = "elastic"  # every spring below the convexity threshold, no memory
    LOADING = "loading"  # overstretched last spring, load at its running peak
    UNLOADING = "unloading"  # elastic springs carry h - w_bar, memory term frozen
    FROZEN = "frozen"  # |h| <= w_bar, elastic springs relaxed, energy constant


class PhaseTracker:
    """Phase state machine with transition listeners"""

    def __init__(self, initial: Phase = Phase.ELASTIC):
        self.phase = initial
        self.previous_phase: Optional[Phase] = None
        self.listeners: List[Callable[[Phase, Phase, int, str], None]] = []
        self.history: List[dict] = []
        logger.debug(f"Phase tracker initialized in {initial.value}")

    def transition(self, new_phase: Phase, step: int, reason: str = "") -> bool:
        """Move to new_phase; returns False when already there"""
        if self.phase == new_phase:
            return False

        self.previous_phase = self.phase
        self.phase = new_phase
        self.history.append({
            "step": step,
            "from": self.previous_phase.value,
            "to": new_phase.value,
            "reason": reason,
        })
        logger.info(f"🔄 Phase: {self.previous_phase.value} → {new_phase.value} at k={step} ({reason})")

        for callback in self.listeners:
            try:
                callback(self.previous_phase, new_phase, step, reason)
            except Exception as e:
                logger.error(f"Error in phase listener: {e}")
        return True

    def add_listener(self, callback: Callable[[Phase, Phase, int, str], None]) -> None:
        self.listeners.append(callback)

    def get_phase(self) -> Phase:
        return self.phase

    def is_cracked(self) -> bool:
        return self.phase != Phase.ELASTIC
