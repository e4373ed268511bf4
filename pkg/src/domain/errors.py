"""
Exception hierarchy for the sediment control toolkit.
Every error carries the process exit code the CLI should return for it.
"""
from typing import Any, Optional


class SedimentControlError(Exception):
    """Base class for all expected failures."""
    exit_code: int = 1


class ConfigError(SedimentControlError):
    """Invalid configuration, unknown keys or usage errors such as grid mismatches."""
    exit_code = 2


class DomainError(SedimentControlError, ValueError):
    """A precondition of a pure function was violated (z <= 0, k < 1, ...)."""
    exit_code = 2


class DataError(SedimentControlError):
    """Observed data cannot be used (unparseable rows, zero variance, ...)."""
    exit_code = 3

    def __init__(self, message: str, offending_lines: Optional[list] = None):
        super().__init__(message)
        self.offending_lines = offending_lines or []


class ConvergenceError(SedimentControlError):
    """
    An iterative method did not reach its tolerance.
    The best state found so far is attached so callers can still report it.
    """
    exit_code = 4

    def __init__(self, message: str, best: Any = None):
        super().__init__(message)
        self.best = best


class CalibrationError(ConvergenceError):
    """Moment matching failed to reach the requested error within its budget."""


class MultistartExhausted(ConvergenceError):
    """Every start of a multistart search raised."""


class NumericError(SedimentControlError):
    """Overflow, non-finite values or a violated a-priori bound."""
    exit_code = 5
