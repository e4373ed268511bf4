from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np

from src.domain.errors import ConvergenceError


@dataclass
class SweepStatus:
    """State of the fixed-point iteration after one macro-iteration."""
    iteration: int
    error: float        # largest single-vertex change
    h: float
    clamps: int = 0     # clamped exponents in this iteration

    @property
    def is_finite(self) -> bool:
        return bool(np.isfinite(self.error) and np.isfinite(self.h))


class ConvergenceMonitor:
    """
    Watches the sweep error history.
    Trips the divergence guard when the error grows by more than `growth` over
    `window` macro-iterations, and warns once when exponents had to be clamped.
    """

    def __init__(self, window: int = 50, growth: float = 10.0):
        self.window = window
        self.growth = growth
        self.current: Optional[SweepStatus] = None
        self.total_clamps = 0
        self._history = deque(maxlen=window + 1)
        self._warned = False

    def update(self, iteration: int, error: float, h: float, clamps: int = 0) -> None:
        self.current = SweepStatus(iteration=iteration, error=error, h=h, clamps=clamps)
        self._history.append(error)
        self.total_clamps += clamps
        if clamps and not self._warned:
            print(f"⚠️  Exponent clamped at |psi dPhi| = 700 ({clamps} terms, iteration {iteration})")
            self._warned = True

    @property
    def is_diverging(self) -> bool:
        if self.current is None:
            return False
        if not self.current.is_finite:
            return True
        if len(self._history) <= self.window:
            return False
        return self.current.error > self.growth * self._history[0]

    def raise_if_diverging(self, best: Optional[Callable[[], Any]] = None) -> None:
        """`best` builds the iterate attached to the error; it is only called on a trip."""
        if self.is_diverging:
            raise ConvergenceError(
                f"sweep diverged at iteration {self.current.iteration}: "
                f"error {self.current.error:.3e} vs {self._history[0]:.3e} "
                f"{self.window} iterations earlier",
                best=best() if best is not None else None,
            )

    def get_status(self) -> str:
        if not self.current:
            return "Sweep: not started"
        return (f"Sweep {self.current.iteration}: Er={self.current.error:.3e} "
                f"h={self.current.h:.6f} clamps={self.total_clamps}")
