"""
Tempered-stable jump kernel nu(dz) = a z^-(1+alpha) exp(-b z) dz.

Besides the density and its analytic moments this module provides the quadrature
weights and the tail first moment consumed by the discretization.
"""
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, simpson
from scipy.special import gamma, gammainc, gammaincinv

from src.domain.errors import DomainError, NumericError

SIMPSON_START_PANELS = 64
SIMPSON_MAX_PANELS = 2 ** 22
SIMPSON_RTOL = 1e-10


@dataclass(frozen=True)
class KernelParams:
    """
    Parameters of the tempered-stable Levy kernel.
    Finite variation is required: 0 <= alpha < 1.
    """
    a: float
    b: float
    alpha: float

    def __post_init__(self):
        if not self.a > 0:
            raise DomainError(f"kernel intensity a must be positive, got {self.a}")
        if not self.b > 0:
            raise DomainError(f"kernel tilting b must be positive, got {self.b}")
        if not 0.0 <= self.alpha < 1.0:
            raise DomainError(f"alpha must lie in [0, 1), got {self.alpha}")

    @classmethod
    def from_scaled(cls, a_prime: float, b: float, alpha: float, rho: float) -> 'KernelParams':
        """
        Build the kernel from the rho-scaled intensity a' used by moment matching.
        The identified a' reproduces M1 = 0.187 rho only with a = a' rho.
        """
        return cls(a=a_prime * rho, b=b, alpha=alpha)

    def scaled_intensity(self, rho: float) -> float:
        """Inverse of from_scaled: a' = a / rho."""
        return self.a / rho

    def in_time_unit(self, factor: float) -> 'KernelParams':
        """Rescale the intensity when the time unit is multiplied by `factor`."""
        return KernelParams(a=self.a * factor, b=self.b, alpha=self.alpha)

    def density(self, z):
        """a z^-(1+alpha) exp(-b z) for z > 0 (scalar or array)."""
        z_arr = np.asarray(z, dtype=float)
        if np.any(z_arr <= 0):
            raise DomainError("kernel density is only defined for z > 0")
        value = self.a * np.exp(-(1.0 + self.alpha) * np.log(z_arr) - self.b * z_arr)
        return float(value) if value.ndim == 0 else value

    def moment(self, k: int) -> float:
        """M_k = a b^(alpha-k) Gamma(k-alpha)."""
        if int(k) != k or k < 1:
            raise DomainError(f"moment order must be a positive integer, got {k}")
        return float(self.a * self.b ** (self.alpha - k) * gamma(k - self.alpha))

    def truncated_moment(self, k: int, lo: float, hi: float) -> float:
        """Integral of z^k nu(dz) over [lo, hi] via the regularized incomplete gamma."""
        if lo < 0 or hi < lo:
            raise DomainError(f"invalid truncation interval [{lo}, {hi}]")
        shape = k - self.alpha
        upper = 1.0 if np.isinf(hi) else gammainc(shape, self.b * hi)
        return self.moment(k) * float(upper - gammainc(shape, self.b * lo))

    def truncated_first_moment(self, lo: float, hi: float) -> float:
        return self.truncated_moment(1, lo, hi)

    def mass_above(self, z0: float) -> float:
        """Total jump intensity nu([z0, inf)); finite for z0 > 0."""
        if z0 <= 0:
            raise DomainError("the kernel has infinite activity; mass_above needs z0 > 0")
        value, _ = quad(self.density, z0, np.inf, limit=200)
        return float(value)

    def small_jump_cut(self, fraction: float = 1e-3) -> float:
        """Cut eps_z with int_0^eps z nu(dz) = fraction * M1."""
        if not 0 < fraction < 1:
            raise DomainError(f"fraction must lie in (0, 1), got {fraction}")
        return float(gammaincinv(1.0 - self.alpha, fraction) / self.b)

    def midpoints(self, dq: float, count: int) -> np.ndarray:
        """Cell midpoints z_k = (k + 1/2) dQ for k = 1..count."""
        return (np.arange(1, count + 1) + 0.5) * dq

    def quadrature_weights(self, dq: float, count: int) -> np.ndarray:
        """
        Midpoint-cell masses v_k = dQ * density((k + 1/2) dQ), k = 1..count.
        Mass below the first cell is carried by the first-moment rewriting of the
        nonlocal term, not by a weight.
        """
        if not dq > 0 or count < 1:
            raise DomainError(f"need dq > 0 and count >= 1, got dq={dq}, count={count}")
        return dq * self.density(self.midpoints(dq, count))

    def tail_first_moment(self, qbar: float) -> float:
        """
        V = int_qbar^inf z nu(dz) = a qbar^(1-alpha) int_0^1 x^(alpha-2) exp(-b qbar / x) dx.

        The substituted integral is evaluated by composite Simpson, doubling the panel
        count until two successive estimates agree to SIMPSON_RTOL.
        """
        if not qbar > 0:
            raise DomainError(f"truncation qbar must be positive, got {qbar}")
        scale = self.b * qbar

        def integrand(x: np.ndarray) -> np.ndarray:
            out = np.zeros_like(x)
            inside = x > 0
            xs = x[inside]
            out[inside] = np.exp((self.alpha - 2.0) * np.log(xs) - scale / xs)
            return out

        panels = SIMPSON_START_PANELS
        previous = None
        while panels <= SIMPSON_MAX_PANELS:
            x = np.linspace(0.0, 1.0, panels + 1)
            estimate = simpson(integrand(x), x=x)
            if previous is not None and abs(estimate - previous) <= SIMPSON_RTOL * abs(estimate):
                return float(self.a * qbar ** (1.0 - self.alpha) * estimate)
            previous = estimate
            panels *= 2
        raise NumericError(
            f"Simpson rule for the tail moment did not converge (qbar={qbar}, "
            f"last estimate {previous}, panels {panels // 2})"
        )

    def to_dict(self) -> dict:
        return {'a': self.a, 'b': self.b, 'alpha': self.alpha}
