"""
gCBI streamflow model dQ = -rho (Q - Q_min) dt + jumps with intensity (Q + A) nu(dz).

Stationary moments follow from the steady state of the moment ODE system, the
autocorrelation is a single exponential with rate rho - M1.
"""
from dataclasses import dataclass
from math import comb
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from src.domain.errors import DataError, DomainError, NumericError
from src.domain.kernel import KernelParams


@dataclass(frozen=True)
class StationaryStats:
    """Mean, standard deviation, skewness and (non-excess) kurtosis."""
    mean: float
    std_dev: float
    skewness: float
    kurtosis: float

    def __post_init__(self):
        if not self.std_dev > 0:
            raise NumericError(f"standard deviation must be positive, got {self.std_dev}")
        if not self.kurtosis > self.skewness ** 2 + 1.0 - 1e-12 * self.kurtosis:
            raise DataError(
                f"infeasible moments: kurtosis {self.kurtosis} <= skewness^2 + 1 "
                f"({self.skewness ** 2 + 1.0})"
            )

    @classmethod
    def from_raw_moments(cls, m1: float, m2: float, m3: float, m4: float) -> 'StationaryStats':
        var = m2 - m1 ** 2
        if not var > 0:
            raise NumericError(f"stationary variance is not positive ({var})")
        skew = (m3 - 3.0 * m1 * m2 + 2.0 * m1 ** 3) / var ** 1.5
        kurt = (m4 - 4.0 * m1 * m3 + 6.0 * m1 ** 2 * m2 - 3.0 * m1 ** 4) / var ** 2
        return cls(mean=m1, std_dev=float(np.sqrt(var)), skewness=skew, kurtosis=kurt)

    def as_array(self) -> np.ndarray:
        return np.array([self.mean, self.std_dev, self.skewness, self.kurtosis])

    def relative_errors(self, modeled: 'StationaryStats') -> np.ndarray:
        """(observed - modeled) / observed, taking self as the observed side."""
        observed = self.as_array()
        return (observed - modeled.as_array()) / observed

    def to_dict(self) -> dict:
        return {
            'mean': self.mean,
            'std_dev': self.std_dev,
            'skewness': self.skewness,
            'kurtosis': self.kurtosis,
        }


@dataclass(frozen=True)
class GcbiModel:
    """
    Streamflow SDE coefficients plus jump kernel.
    kernel=None is the jump-free model relaxing deterministically to q_min.
    """
    rho: float
    q_min: float
    a_shift: float
    kernel: Optional[KernelParams]

    def __post_init__(self):
        if not self.q_min > 0:
            raise DomainError(f"minimum discharge must be positive, got {self.q_min}")
        if self.a_shift < 0:
            raise DomainError(f"self-excitation offset must be non-negative, got {self.a_shift}")
        if not self.rho > self.jump_moment(1):
            raise DomainError(
                f"infeasible model: rho={self.rho} must exceed M1={self.jump_moment(1)}"
            )

    def jump_moment(self, k: int) -> float:
        return 0.0 if self.kernel is None else self.kernel.moment(k)

    @property
    def decay_rate(self) -> float:
        """rho - M1, the autocorrelation decay rate."""
        return self.rho - self.jump_moment(1)

    @property
    def m1_ratio(self) -> float:
        """Dimensionless M1 / rho."""
        return self.jump_moment(1) / self.rho

    @property
    def stationary_mean(self) -> float:
        return (self.rho * self.q_min + self.a_shift * self.jump_moment(1)) / self.decay_rate

    def in_time_unit(self, factor: float) -> 'GcbiModel':
        """The same model with time measured in units `factor` times larger."""
        kernel = None if self.kernel is None else self.kernel.in_time_unit(factor)
        return GcbiModel(rho=self.rho * factor, q_min=self.q_min, a_shift=self.a_shift, kernel=kernel)

    def stationary_raw_moments(self, n_max: int) -> np.ndarray:
        """
        Stationary E[Q^n] for n = 1..n_max (element n-1 holds m_n).

        Each m_n solves the steady state of
        dm_n/dt = n rho Q_min m_{n-1} - n rho m_n + sum_k C(n,k) M_{n-k} (m_{k+1} + A m_k).
        """
        if n_max < 1:
            raise DomainError(f"n_max must be >= 1, got {n_max}")
        big_m = [0.0] + [self.jump_moment(k) for k in range(1, n_max + 1)]
        m = [1.0]
        for n in range(1, n_max + 1):
            coupling = sum(
                comb(n, k) * big_m[n - k] * (m[k + 1] + self.a_shift * m[k])
                for k in range(0, n - 1)
            )
            numerator = (self.rho * self.q_min + big_m[1] * self.a_shift) * m[n - 1] + coupling / n
            m.append(numerator / (self.rho - big_m[1]))
        return np.array(m[1:])

    def stationary_stats(self) -> StationaryStats:
        m1, m2, m3, m4 = self.stationary_raw_moments(4)
        return StationaryStats.from_raw_moments(m1, m2, m3, m4)

    def autocorrelation(self, lag):
        """omega(lag) = exp(-(rho - M1) lag)."""
        lag_arr = np.asarray(lag, dtype=float)
        if np.any(lag_arr < 0):
            raise DomainError("autocorrelation lag must be non-negative")
        value = np.exp(-self.decay_rate * lag_arr)
        return float(value) if value.ndim == 0 else value

    def to_dict(self) -> dict:
        return {
            'rho': self.rho,
            'q_min': self.q_min,
            'a_shift': self.a_shift,
            'kernel': None if self.kernel is None else self.kernel.to_dict(),
        }


def empirical_stats(series: Sequence[float]) -> StationaryStats:
    """Sample statistics with the population convention used by stationary_stats."""
    x = np.asarray(series, dtype=float)
    if x.size < 4:
        raise DataError(f"need at least 4 samples, got {x.size}")
    centered = x - x.mean()
    var = np.mean(centered ** 2)
    if not var > 0:
        raise DataError("discharge series has zero variance")
    return StationaryStats(
        mean=float(x.mean()),
        std_dev=float(np.sqrt(var)),
        skewness=float(np.mean(centered ** 3) / var ** 1.5),
        kurtosis=float(np.mean(centered ** 4) / var ** 2),
    )


def empirical_autocorrelation(
    series: Sequence[float], lags: Iterable[int], step: float = 1.0
) -> list:
    """(lag * step, omega) pairs of the sample autocorrelation at integer sample lags."""
    x = np.asarray(series, dtype=float)
    centered = x - x.mean()
    denom = np.dot(centered, centered)
    if not denom > 0:
        raise DataError("discharge series has zero variance")
    pairs = []
    for lag in lags:
        if lag < 0 or lag >= x.size:
            raise DataError(f"lag {lag} outside the series of length {x.size}")
        pairs.append((lag * step, float(np.dot(centered[:x.size - lag], centered[lag:]) / denom)))
    return pairs


def identify_decay(acf_pairs: Sequence[Tuple[float, float]], m1_ratio: float) -> Tuple[float, float]:
    """
    Fit omega = exp(-decay * lag) through the origin in log space.

    Returns (decay, rho) with rho = decay / (1 - M1/rho).
    """
    if len(acf_pairs) < 2:
        raise DataError(f"need at least 2 autocorrelation pairs, got {len(acf_pairs)}")
    if not 0 <= m1_ratio < 1:
        raise DomainError(f"M1/rho ratio must lie in [0, 1), got {m1_ratio}")
    lags = np.array([p[0] for p in acf_pairs], dtype=float)
    omegas = np.array([p[1] for p in acf_pairs], dtype=float)
    bad = [i for i, w in enumerate(omegas) if not 0 < w <= 1]
    if bad:
        raise DataError("autocorrelation values must lie in (0, 1]", offending_lines=bad)
    if np.any(lags < 0) or not np.any(lags > 0):
        raise DataError("autocorrelation lags must be non-negative with at least one positive")
    decay = float(-np.dot(lags, np.log(omegas)) / np.dot(lags, lags))
    return decay, decay / (1.0 - m1_ratio)
