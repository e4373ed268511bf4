"""
Problem description shared by the discretization and the solver:
the (Q, S, l) grid, cost structure, depletion penalty and the assembled problem.
"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from src.domain.errors import ConfigError
from src.domain.gcbi import GcbiModel
from src.domain.sediment import TransportCoefficient

PENALTY_KINDS = ('indicator', 'regularized', 'none')
TOP_BOUNDARIES = ('reflect', 'absorb')


@dataclass(frozen=True)
class Grid:
    """
    Vertices Q_i = i dQ (0..N_Q), S_j = j dS (0..N_S), Erlang levels l = 1..L.

    `top_boundary` sets the Q = Qbar row: 'reflect' keeps the upwind drift there so the
    chain returns into the domain, 'absorb' drops every Q term on that row.
    """
    n_q: int
    n_s: int
    q_bar: float
    s_bar: float
    l_bar: int = 1
    top_boundary: str = 'reflect'

    def __post_init__(self):
        if self.n_q < 2 or self.n_s < 2:
            raise ConfigError(f"grid needs at least 2 cells per axis, got {self.n_q}x{self.n_s}")
        if self.l_bar < 1:
            raise ConfigError(f"Erlang cap must be >= 1, got {self.l_bar}")
        if not (self.q_bar > 0 and self.s_bar > 0):
            raise ConfigError("grid extents must be positive")
        if self.top_boundary not in TOP_BOUNDARIES:
            raise ConfigError(
                f"unknown top boundary {self.top_boundary!r}, expected one of {TOP_BOUNDARIES}"
            )

    @property
    def dq(self) -> float:
        return self.q_bar / self.n_q

    @property
    def ds(self) -> float:
        return self.s_bar / self.n_s

    @property
    def q_nodes(self) -> np.ndarray:
        return np.arange(self.n_q + 1) * self.dq

    @property
    def s_nodes(self) -> np.ndarray:
        return np.arange(self.n_s + 1) * self.ds

    @property
    def shape(self) -> tuple:
        return (self.n_q + 1, self.n_s + 1, self.l_bar)

    def nearest_vertex(self, q: float, s: float) -> tuple:
        """Snap an off-grid state to the closest vertex (Q clipped at Qbar)."""
        i = int(round(min(max(q, 0.0), self.q_bar) / self.dq))
        j = int(round(min(max(s, 0.0), self.s_bar) / self.ds))
        return i, j

    def to_dict(self) -> dict:
        return {
            'n_q': self.n_q, 'n_s': self.n_s, 'q_bar': self.q_bar,
            's_bar': self.s_bar, 'l_bar': self.l_bar, 'top_boundary': self.top_boundary,
        }


@dataclass(frozen=True)
class DepletionPenalty:
    """
    Non-increasing bounded penalty f(S).
    'indicator' is 1{S=0}; 'regularized' is max(kappa - S, 0) / kappa; 'none' is 0.
    """
    kind: str = 'indicator'
    kappa: float = 0.0

    def __post_init__(self):
        if self.kind not in PENALTY_KINDS:
            raise ConfigError(f"unknown penalty kind {self.kind!r}, expected one of {PENALTY_KINDS}")
        if self.kind == 'regularized' and not self.kappa > 0:
            raise ConfigError("regularized penalty needs kappa > 0")

    def values(self, s) -> np.ndarray:
        s_arr = np.asarray(s, dtype=float)
        if self.kind == 'indicator':
            return np.where(s_arr <= 0.0, 1.0, 0.0)
        if self.kind == 'regularized':
            return np.maximum(self.kappa - s_arr, 0.0) / self.kappa
        return np.zeros_like(s_arr)

    def at(self, s: float) -> float:
        return float(self.values(s))

    def to_dict(self) -> dict:
        return {'kind': self.kind, 'kappa': self.kappa}


@dataclass(frozen=True)
class CostSpec:
    """
    Cost structure in the problem's time unit.

    C(eta) = c1 * eta / volume_unit + c0 for eta > 0 and C(0) = 0; o is paid at every
    observation and W is the Erlang phase scale. Non-negativity is checked here,
    strict positivity (required by the control problem) by require_positive().
    """
    c0: float
    c1: float
    o: float
    psi: float
    w: float
    penalty: DepletionPenalty = field(default_factory=DepletionPenalty)
    volume_unit: float = 1.0

    def __post_init__(self):
        for name in ('c0', 'c1', 'o', 'psi'):
            if getattr(self, name) < 0:
                raise ConfigError(f"cost parameter {name} must be non-negative")
        if not self.w > 0:
            raise ConfigError(f"Erlang scale W must be positive, got {self.w}")
        if not self.volume_unit > 0:
            raise ConfigError("volume unit must be positive")

    def require_positive(self) -> None:
        for name in ('c0', 'c1', 'o'):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive for the control problem")

    def replenishment_cost(self, eta):
        eta_arr = np.asarray(eta, dtype=float)
        value = np.where(eta_arr > 0, self.c1 * eta_arr / self.volume_unit + self.c0, 0.0)
        return float(value) if value.ndim == 0 else value

    def to_dict(self) -> dict:
        return {
            'c0': self.c0, 'c1': self.c1, 'o': self.o, 'psi': self.psi, 'w': self.w,
            'penalty': self.penalty.to_dict(), 'volume_unit': self.volume_unit,
        }


@dataclass(frozen=True)
class PotentialField:
    """Potential Phi[i, j, l-1] on the (Q, S, l) grid; l is 1-based in accessors."""
    values: np.ndarray

    @classmethod
    def zeros(cls, grid: Grid) -> 'PotentialField':
        return cls(np.zeros(grid.shape))

    def at(self, i: int, j: int, l: int) -> float:
        return float(self.values[i, j, l - 1])

    def level(self, l: int) -> np.ndarray:
        """(N_Q+1) x (N_S+1) slice for Erlang level l."""
        return self.values[:, :, l - 1]

    @property
    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


@dataclass(frozen=True, eq=False)
class Problem:
    """
    Everything the discrete HJBI residual needs, expressed in one time unit.

    `source` replaces f(S_j) by an arbitrary f(Q_i, S_j) array and `switching=False`
    removes the observation operator; together they give the reduced equation used
    by the manufactured-solution checks.
    """
    model: GcbiModel
    transport: TransportCoefficient
    costs: CostSpec
    grid: Grid
    switching: bool = True
    source: Optional[np.ndarray] = None

    def __post_init__(self):
        if abs(self.transport.q_bar - self.grid.q_bar) > 1e-12 * self.grid.q_bar:
            raise ConfigError(
                f"transport truncation {self.transport.q_bar} differs from grid Qbar {self.grid.q_bar}"
            )
        if not self.grid.q_bar > self.transport.q_hat:
            raise ConfigError("grid Qbar must exceed the threshold discharge")
        if self.switching:
            self.costs.require_positive()
        elif self.grid.l_bar != 1:
            raise ConfigError("a problem without switching must use a single Erlang level")
        if self.source is not None and self.source.shape != self.grid.shape[:2]:
            raise ConfigError(
                f"source shape {self.source.shape} does not match grid {self.grid.shape[:2]}"
            )

    @cached_property
    def stencil(self):
        from src.domain.discretization import assemble
        return assemble(self)

    def source_values(self) -> np.ndarray:
        if self.source is not None:
            return np.asarray(self.source, dtype=float)
        f = self.costs.penalty.values(self.grid.s_nodes)
        return np.broadcast_to(f, self.grid.shape[:2]).copy()
