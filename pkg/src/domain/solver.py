"""
Fast-sweeping fixed-point solver for the ergodic pair (h, Phi) and policy extraction.
"""
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from src.domain.convergence import ConvergenceMonitor
from src.domain.discretization import macro_iteration, max_abs_residual, switching_argmin
from src.domain.errors import ConvergenceError, DomainError, NumericError
from src.domain.problem import Grid, PotentialField, Problem

DEFAULT_MAX_ITERATIONS = 1_000_000
BOUND_SLACK = 1e-6


@dataclass(frozen=True)
class Solution:
    h: float
    field: PotentialField
    iterations: int
    final_error: float
    max_residual: float = float('nan')
    clamp_count: int = 0
    frozen_vertices: int = 0

    def slices(self) -> dict:
        """Phi per Erlang level, keyed by l = 1..L."""
        return {l: self.field.level(l) for l in range(1, self.field.values.shape[2] + 1)}

    def to_dict(self) -> dict:
        return {
            'h': self.h,
            'iterations': self.iterations,
            'final_error': self.final_error,
            'max_residual': self.max_residual,
            'clamp_count': self.clamp_count,
            'frozen_vertices': self.frozen_vertices,
        }


@dataclass(frozen=True)
class Policy:
    """
    Observation/replenishment policy on the (Q, S) grid.
    l_star is the next Erlang level (1-based), eta_star the volume added at observation.
    """
    l_star: np.ndarray
    eta_star: np.ndarray
    field: PotentialField
    psi: float
    grid: Grid

    def phi_star(self, i: int, j: int, l: int, i_prime: int) -> float:
        """Worst-case kernel distortion exp(-psi (Phi_{i,j,l} - Phi_{i+i',j,l}))."""
        if i_prime < 0 or i + i_prime > self.grid.n_q:
            raise DomainError(f"jump target {i + i_prime} outside the grid")
        if self.psi == 0:
            return 1.0
        return float(np.exp(-self.psi * (self.field.at(i, j, l) - self.field.at(i + i_prime, j, l))))

    def lookup(self, q: float, s: float) -> Tuple[int, float]:
        """(L*, eta*) at the vertex nearest to (q, s)."""
        i, j = self.grid.nearest_vertex(q, s)
        return int(self.l_star[i, j]), float(self.eta_star[i, j])


def hamiltonian_bound(problem: Problem) -> Tuple[float, float]:
    """Discrete a-priori bounds 0 <= h <= f(0) + o / W."""
    costs = problem.costs
    return 0.0, costs.penalty.at(0.0) + costs.o / costs.w


def sweep(
    state: Tuple[float, PotentialField], problem: Problem, w: float
) -> Tuple[float, PotentialField, float]:
    """One macro-iteration on a copy of the field: returns (h, field, Er)."""
    if not 0 < w < 1:
        raise DomainError(f"relaxation weight must lie in (0, 1), got {w}")
    h, field = state
    phi = np.array(field.values, dtype=float, order='C')
    h, err, _, _ = macro_iteration(float(h), phi, problem.stencil, float(w))
    return float(h), PotentialField(phi), float(err)


def max_vertex_residual(solution: Solution, problem: Problem) -> float:
    phi = np.ascontiguousarray(solution.field.values, dtype=float)
    return float(max_abs_residual(solution.h, phi, problem.stencil))


def solve(
    problem: Problem,
    tol: float = 1e-8,
    w: float = 0.3,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    initial: Optional[PotentialField] = None,
    on_progress: Optional[Callable[[ConvergenceMonitor], None]] = None,
) -> Solution:
    """
    Iterate macro-iterations until the largest vertex update is <= tol.

    The initial guess is shifted so the gauge vertex (0, 0, l=1) is zero. Raises
    ConvergenceError (with the last iterate attached) on the iteration cap or the
    divergence guard, and NumericError when a converged h violates its bounds.
    """
    if not tol > 0:
        raise DomainError(f"tolerance must be positive, got {tol}")
    if not 0 < w < 1:
        raise DomainError(f"relaxation weight must lie in (0, 1), got {w}")
    st = problem.stencil
    if initial is None:
        phi = np.zeros(problem.grid.shape)
    else:
        if initial.values.shape != problem.grid.shape:
            raise DomainError(f"initial field shape {initial.values.shape} does not match grid")
        phi = np.array(initial.values, dtype=float, order='C')
        phi -= phi[0, 0, 0]

    monitor = ConvergenceMonitor()
    h = 0.0
    err = np.inf
    frozen = 0
    iteration = 0

    def snapshot() -> Solution:
        return Solution(
            h=h, field=PotentialField(phi.copy()), iterations=iteration, final_error=err,
            clamp_count=monitor.total_clamps, frozen_vertices=frozen,
        )

    while err > tol:
        if iteration >= max_iterations:
            raise ConvergenceError(
                f"no convergence after {max_iterations} sweeps (Er={err:.3e}, tol={tol:.1e})",
                best=snapshot(),
            )
        iteration += 1
        h, err, clamps, frozen_visits = macro_iteration(h, phi, st, float(w))
        frozen = frozen_visits // 4
        monitor.update(iteration, err, h, clamps)
        monitor.raise_if_diverging(best=snapshot)
        if on_progress is not None:
            on_progress(monitor)

    solution = Solution(
        h=float(h), field=PotentialField(phi), iterations=iteration, final_error=float(err),
        max_residual=float(max_abs_residual(h, phi, st)),
        clamp_count=monitor.total_clamps, frozen_vertices=frozen,
    )
    if not solution.field.is_finite:
        raise NumericError("converged potential contains non-finite values")
    if problem.switching:
        lower, upper = hamiltonian_bound(problem)
        if not lower - BOUND_SLACK <= solution.h <= upper + BOUND_SLACK:
            raise NumericError(f"h = {solution.h} violates the a-priori bound [{lower}, {upper}]")
    return solution


def extract_policy(solution: Solution, problem: Problem) -> Policy:
    """Per-vertex argmin of the observation problem with the smallest (j', l') tie-break."""
    if solution.field.values.shape != problem.grid.shape:
        raise DomainError("solution does not belong to this grid")
    phi = np.ascontiguousarray(solution.field.values, dtype=float)
    jp, lp = switching_argmin(phi, problem.stencil)
    return Policy(
        l_star=lp + 1,
        eta_star=jp * problem.grid.ds,
        field=solution.field,
        psi=problem.costs.psi,
        grid=problem.grid,
    )
