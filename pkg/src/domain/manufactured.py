"""
Manufactured-solution verification of the discretization.

The exact pair is h = H and Phi(Q, S) = -amp * (Q / Qbar) * (S / Sbar)^beta + phi0.
Its source term is injected into the switching-free problem with a single Erlang
level, and the numerical solution is compared on the normalized unit square.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from src.domain.errors import ConfigError, DomainError, SedimentControlError
from src.domain.gcbi import GcbiModel
from src.domain.problem import CostSpec, DepletionPenalty, Grid, PotentialField, Problem
from src.domain.sediment import TransportCoefficient
from src.domain.solver import Solution, solve

CONVERGENCE_COLUMNS = (
    'N', 'err(H)', 'err(l1)', 'err(l2)', 'err(linf)',
    'rate(H)', 'rate(l1)', 'rate(l2)', 'rate(linf)',
)
FAILED = 'failed'


@dataclass(frozen=True)
class ManufacturedCase:
    beta: float
    q_bar: float
    s_bar: float
    amp: float = 1.0
    phi0: float = 0.0
    h_exact: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if not (self.q_bar > 0 and self.s_bar > 0):
            raise ConfigError("manufactured domain extents must be positive")
        if self.phi0 != 0.0:
            raise ConfigError("the gauge Phi(0, 0) = 0 requires phi0 = 0")

    def grid(self, n: int) -> Grid:
        return Grid(n_q=n, n_s=n, q_bar=self.q_bar, s_bar=self.s_bar, l_bar=1)

    def to_dict(self) -> dict:
        return {
            'beta': self.beta, 'q_bar': self.q_bar, 's_bar': self.s_bar,
            'amp': self.amp, 'phi0': self.phi0, 'h_exact': self.h_exact,
        }


class ErrorNorms(NamedTuple):
    l1: float
    l2: float
    linf: float
    h_error: float


def _s_power(s_tilde: np.ndarray, exponent: float) -> np.ndarray:
    # 0 ** negative exponent only ever multiplies F(Q, 0) = 0
    positive = s_tilde > 0
    return np.where(positive, np.where(positive, s_tilde, 1.0) ** exponent, 0.0)


def manufactured_source(
    case: ManufacturedCase, model: GcbiModel, transport: TransportCoefficient, q, s
):
    """
    Source f(Q, S) for which the manufactured pair solves the reduced equation:
    H - amp s^beta [rho (Q - Q_min) - (Q + A) M1] / Qbar - amp beta q s^(beta-1) F(Q, S) / Sbar.
    """
    q_arr = np.asarray(q, dtype=float)
    s_arr = np.asarray(s, dtype=float)
    if np.any(q_arr < 0) or np.any(s_arr < 0):
        raise DomainError("manufactured source needs Q, S >= 0")
    q_arr, s_arr = np.broadcast_arrays(q_arr, s_arr)
    q_tilde = q_arr / case.q_bar
    s_tilde = s_arr / case.s_bar
    m1 = model.jump_moment(1)
    drift = model.rho * (q_arr - model.q_min) - (q_arr + model.a_shift) * m1
    value = (
        case.h_exact
        - case.amp * _s_power(s_tilde, case.beta) * drift / case.q_bar
        - case.amp * case.beta * q_tilde * _s_power(s_tilde, case.beta - 1.0)
        * np.asarray(transport.rate(q_arr, s_arr)) / case.s_bar
    )
    return float(value) if value.ndim == 0 else value


def exact_potential(case: ManufacturedCase, grid: Grid) -> PotentialField:
    q_tilde = grid.q_nodes / case.q_bar
    s_tilde = grid.s_nodes / case.s_bar
    phi = -case.amp * np.outer(q_tilde, s_tilde ** case.beta) + case.phi0
    return PotentialField(phi[:, :, None])


def manufactured_problem(
    case: ManufacturedCase, model: GcbiModel, transport: TransportCoefficient, n: int
) -> Problem:
    grid = case.grid(n)
    source = manufactured_source(
        case, model, transport, grid.q_nodes[:, None], grid.s_nodes[None, :]
    )
    costs = CostSpec(c0=0.0, c1=0.0, o=0.0, psi=0.0, w=1.0, penalty=DepletionPenalty('none'))
    return Problem(
        model=model, transport=transport, costs=costs, grid=grid,
        switching=False, source=np.asarray(source),
    )


def error_norms(
    numeric: PotentialField,
    exact: PotentialField,
    grid: Grid,
    h_num: float = 1.0,
    h_exact: float = 1.0,
) -> ErrorNorms:
    """Trapezoidal l1 / l2 norms on the unit square, max norm and signed h error."""
    if numeric.values.shape != exact.values.shape or numeric.values.shape[:2] != grid.shape[:2]:
        raise ConfigError(
            f"fields {numeric.values.shape} and {exact.values.shape} are not on grid {grid.shape}"
        )
    e = np.abs(numeric.values - exact.values).max(axis=2)

    def integral(values: np.ndarray) -> float:
        return float(trapezoid(trapezoid(values, dx=1.0 / grid.n_s, axis=1), dx=1.0 / grid.n_q))

    return ErrorNorms(
        l1=integral(e),
        l2=math.sqrt(integral(e ** 2)),
        linf=float(e.max()),
        h_error=float(h_num - h_exact),
    )


@dataclass
class StudyRow:
    n: int
    norms: Optional[ErrorNorms] = None
    iterations: int = 0
    failure: Optional[str] = None
    rates: dict = field(default_factory=dict)

    @property
    def errors(self) -> Optional[dict]:
        if self.norms is None:
            return None
        return {
            'H': abs(self.norms.h_error), 'l1': self.norms.l1,
            'l2': self.norms.l2, 'linf': self.norms.linf,
        }

    def as_row(self) -> list:
        errors = self.errors
        cells = [self.n]
        for key in ('H', 'l1', 'l2', 'linf'):
            cells.append(FAILED if errors is None else errors[key])
        for key in ('H', 'l1', 'l2', 'linf'):
            cells.append(self.rates.get(key, ''))
        return cells


def observed_rate(coarse_error: float, fine_error: float, n_coarse: int, n_fine: int) -> float:
    """Order p with error ~ N^-p between two resolutions."""
    if not (coarse_error > 0 and fine_error > 0):
        return float('nan')
    return math.log(coarse_error / fine_error) / math.log(n_fine / n_coarse)


def run_case(
    case: ManufacturedCase,
    model: GcbiModel,
    transport: TransportCoefficient,
    n: int,
    tol: float = 1e-10,
    w: float = 0.35,
    max_iterations: int = 1_000_000,
) -> StudyRow:
    problem = manufactured_problem(case, model, transport, n)
    try:
        solution: Solution = solve(problem, tol=tol, w=w, max_iterations=max_iterations)
    except SedimentControlError as e:
        return StudyRow(n=n, failure=f"{type(e).__name__}: {e}")
    norms = error_norms(
        solution.field, exact_potential(case, problem.grid), problem.grid,
        h_num=solution.h, h_exact=case.h_exact,
    )
    return StudyRow(n=n, norms=norms, iterations=solution.iterations)


def convergence_study(
    case: ManufacturedCase,
    model: GcbiModel,
    transport: TransportCoefficient,
    ns: Sequence[int],
    tol: float = 1e-10,
    w: float = 0.35,
    threads: int = 1,
    max_iterations: int = 1_000_000,
) -> List[StudyRow]:
    """
    Errors for every N and pairwise rates between consecutive successful rows.
    A rate is stored on the coarser row of its pair, so the last row has none.
    Failed solves stay in the table with a failure marker.
    """
    ns = list(ns)
    if not ns or any(b <= a for a, b in zip(ns, ns[1:])):
        raise ConfigError(f"grid sizes must be strictly increasing, got {ns}")
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(
            lambda n: run_case(case, model, transport, n, tol, w, max_iterations), ns
        ))
    for previous, row in zip(rows, rows[1:]):
        if previous.errors is None or row.errors is None:
            continue
        previous.rates = {
            key: observed_rate(previous.errors[key], row.errors[key], previous.n, row.n)
            for key in row.errors
        }
    return rows
