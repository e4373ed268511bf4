"""
Sediment transport coefficient F(Q, S).

Water depth follows Manning's law for a wide rectangular channel, the Shields number
is the slope-corrected bed shear stress and the bedload formula is reduced once to
the two-coefficient form F1 x (1 + F2 x), x = max(min(Q, Qbar)^0.6 - Qhat^0.6, 0).
"""
from dataclasses import dataclass, fields

import numpy as np

from src.domain.errors import ConfigError, DomainError

DEPTH_EXPONENT = 0.6


@dataclass(frozen=True)
class SedimentPhysics:
    """Grain, channel and fluid properties (SI units)."""
    d: float = 0.005
    zeta: float = 0.5
    n_w: float = 0.035
    B_w: float = 20.0
    I_w: float = 0.0015
    theta_t: float = 0.072
    rho_p: float = 2650.0
    rho_w: float = 997.0
    g: float = 9.81
    kappa: float = 0.4
    mu_b: float = 0.63
    c_M: float = 1.7

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ConfigError(f"sediment parameter {f.name} must be positive")
        if not self.zeta < 1:
            raise ConfigError(f"porosity must lie in (0, 1), got {self.zeta}")
        if self.I_w >= 0.1:
            raise ConfigError(f"bed slope {self.I_w} is not small (must be < 0.1)")
        if not self.rho_p > self.rho_w:
            raise ConfigError("particle density must exceed water density")
        if not self.slope_correction > 0:
            raise ConfigError(f"slope correction Z_c = {self.slope_correction} is not positive")

    @property
    def slope_correction(self) -> float:
        """Z_c = 1 - I_w rho_p / (mu_b (rho_p - rho_w))."""
        return 1.0 - self.I_w * self.rho_p / (self.mu_b * (self.rho_p - self.rho_w))

    @property
    def _conveyance(self) -> float:
        return self.n_w / (self.B_w * np.sqrt(self.I_w))

    @property
    def _shields_per_depth(self) -> float:
        return self.rho_w * self.I_w / ((self.rho_p - self.rho_w) * self.d * self.slope_correction)

    @property
    def _transport_scale(self) -> float:
        """Momentum scale times the bedload prefactor of the transport formula."""
        momentum = self.rho_p * self.d * np.sqrt((self.rho_p / self.rho_w - 1.0) * self.g * self.d)
        prefactor = 2.0 * np.sqrt(self.theta_t) / (
            self.kappa * self.mu_b * np.sqrt(self.slope_correction)
        )
        return momentum * prefactor

    def manning_depth(self, q):
        """H_w = (n_w Q / (B_w sqrt(I_w)))^0.6."""
        q_arr = _non_negative(q)
        value = (self._conveyance * q_arr) ** DEPTH_EXPONENT
        return float(value) if value.ndim == 0 else value

    def shields_number(self, q):
        value = self._shields_per_depth * np.asarray(self.manning_depth(q))
        return float(value) if value.ndim == 0 else value

    def threshold_discharge(self) -> float:
        """Discharge Qhat at which the Shields number reaches theta_t."""
        depth = self.theta_t / self._shields_per_depth
        return float(depth ** (1.0 / DEPTH_EXPONENT) / self._conveyance)

    def transport_rate(self, q, s):
        """Full-physics F(Q, S) in m3/s (no truncation at Qbar)."""
        excess = np.maximum(np.asarray(self.shields_number(q)) - self.theta_t, 0.0)
        flux = self._transport_scale * excess * (1.0 + self.c_M / self.mu_b * excess)
        value = np.where(np.asarray(s) > 0, self.B_w * flux / (self.zeta * self.rho_p), 0.0)
        return float(value) if value.ndim == 0 else value

    def reduced(self, q_bar: float) -> 'TransportCoefficient':
        """Coefficients (F1, F2, Qhat) of the reduced transport law truncated at Qbar."""
        k = self._shields_per_depth * self._conveyance ** DEPTH_EXPONENT
        f1 = self.B_w / (self.zeta * self.rho_p) * self._transport_scale * k
        f2 = self.c_M / self.mu_b * k
        return TransportCoefficient(f1=f1, f2=f2, q_hat=self.threshold_discharge(), q_bar=q_bar)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class TransportCoefficient:
    """F(Q, S) = 1{S>0} F1 x (1 + F2 x) with x = max(min(Q, Qbar)^0.6 - Qhat^0.6, 0)."""
    f1: float
    f2: float
    q_hat: float
    q_bar: float

    def __post_init__(self):
        if not (self.f1 > 0 and self.f2 > 0):
            raise ConfigError("transport coefficients F1, F2 must be positive")
        if not 0 < self.q_hat < self.q_bar:
            raise ConfigError(
                f"threshold discharge {self.q_hat} must lie in (0, Qbar={self.q_bar})"
            )

    def excess(self, q):
        q_arr = _non_negative(q)
        return np.maximum(
            np.minimum(q_arr, self.q_bar) ** DEPTH_EXPONENT - self.q_hat ** DEPTH_EXPONENT, 0.0
        )

    def rate(self, q, s):
        x = self.excess(q)
        value = np.where(np.asarray(s) > 0, self.f1 * x * (1.0 + self.f2 * x), 0.0)
        return float(value) if value.ndim == 0 else value

    def holder_constant(self) -> float:
        """L with |F(q1,s) - F(q2,s)| <= L |q1^0.6 - q2^0.6| on [0, Qbar]."""
        x_max = self.q_bar ** DEPTH_EXPONENT - self.q_hat ** DEPTH_EXPONENT
        return self.f1 * (1.0 + 2.0 * self.f2 * x_max)

    def in_time_unit(self, seconds: float) -> 'TransportCoefficient':
        """Convert F from m3/s to m3 per time unit of `seconds` seconds."""
        return TransportCoefficient(
            f1=self.f1 * seconds, f2=self.f2, q_hat=self.q_hat, q_bar=self.q_bar
        )

    def to_dict(self) -> dict:
        return {'f1': self.f1, 'f2': self.f2, 'q_hat': self.q_hat, 'q_bar': self.q_bar}


def _non_negative(q) -> np.ndarray:
    q_arr = np.asarray(q, dtype=float)
    if np.any(q_arr < 0):
        raise DomainError("discharge must be non-negative")
    return q_arr
