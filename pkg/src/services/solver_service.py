"""
Solver Service - solves the control problem and exports potential and policy maps.
"""
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Union

import numpy as np

from src.config import RunConfig
from src.domain.convergence import ConvergenceMonitor
from src.domain.errors import ConfigError, ConvergenceError, SedimentControlError
from src.domain.problem import PotentialField, Problem
from src.domain.solver import Policy, Solution, extract_policy, hamiltonian_bound, solve
from src.infrastructure.artifact_store import ArtifactStore, heatmap_script

POLICY_TABLE = 'policy.csv'
SUMMARY_TABLE = 'summary.csv'


def solve_many(
    problems: Sequence[Problem],
    tol: float = 1e-8,
    w: float = 0.3,
    threads: int = 1,
    max_iterations: int = 1_000_000,
) -> List[Union[Solution, SedimentControlError]]:
    """
    Independent solves on a thread pool (the sweep kernels release the GIL).
    Failed solves come back as their exception instead of aborting the study.
    """
    def run(problem: Problem):
        try:
            return solve(problem, tol=tol, w=w, max_iterations=max_iterations)
        except SedimentControlError as e:
            return e

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(run, problems))


def _grid_rows(problem: Problem, values: np.ndarray) -> list:
    grid = problem.grid
    q_norm = grid.q_nodes / grid.q_bar
    s_norm = grid.s_nodes / grid.s_bar
    return [
        [i, j, q_norm[i], s_norm[j], values[i, j]]
        for i in range(grid.n_q + 1)
        for j in range(grid.n_s + 1)
    ]


def write_policy(store: ArtifactStore, problem: Problem, policy: Policy) -> None:
    grid = problem.grid
    rows = [
        [i, j, grid.q_nodes[i] / grid.q_bar, grid.s_nodes[j] / grid.s_bar,
         int(policy.l_star[i, j]), policy.eta_star[i, j]]
        for i in range(grid.n_q + 1)
        for j in range(grid.n_s + 1)
    ]
    store.write_table(POLICY_TABLE, ['i', 'j', 'q_norm', 's_norm', 'l_star', 'eta_star'], rows)


def write_field(store: ArtifactStore, problem: Problem, field: PotentialField) -> None:
    for l in range(1, problem.grid.l_bar + 1):
        name = f'phi_l{l}.csv'
        store.write_table(name, ['i', 'j', 'q_norm', 's_norm', 'phi'], _grid_rows(problem, field.level(l)))


def _grid_from_rows(rows: list, problem: Problem, column: int, dtype=float) -> np.ndarray:
    grid = problem.grid
    out = np.zeros((grid.n_q + 1, grid.n_s + 1), dtype=dtype)
    if len(rows) != out.size:
        raise ConfigError(
            f"stored grid has {len(rows)} vertices, configuration expects {out.size}"
        )
    for row in rows:
        i, j = int(row[0]), int(row[1])
        if not (0 <= i <= grid.n_q and 0 <= j <= grid.n_s):
            raise ConfigError(f"stored vertex ({i}, {j}) outside the configured grid")
        out[i, j] = float(row[column])
    return out


def load_policy(store: ArtifactStore, problem: Problem) -> Policy:
    """Rebuild a Policy written by `solve`; grid mismatches raise ConfigError."""
    metadata = store.read_metadata()
    stored = metadata.get('grid', {})
    expected = problem.grid.to_dict()
    if any(stored.get(k) != v for k, v in expected.items()):
        raise ConfigError(f"policy grid {stored} does not match the configured grid {expected}")
    _, rows = store.read_table(POLICY_TABLE)
    l_star = _grid_from_rows(rows, problem, 4, dtype=int)
    eta_star = _grid_from_rows(rows, problem, 5)
    levels = []
    for l in range(1, problem.grid.l_bar + 1):
        _, phi_rows = store.read_table(f'phi_l{l}.csv')
        levels.append(_grid_from_rows(phi_rows, problem, 4))
    return Policy(
        l_star=l_star, eta_star=eta_star, field=PotentialField(np.stack(levels, axis=2)),
        psi=problem.costs.psi, grid=problem.grid,
    )


class SolverService:
    """Runs the `solve` command."""

    def __init__(self, config: RunConfig, store: ArtifactStore):
        self.config = config
        self.store = store
        self.history: list = []

    def _progress(self, monitor: ConvergenceMonitor) -> None:
        status = monitor.current
        self.history.append([status.iteration, status.error, status.h])
        every = self.config.solver.progress_every
        if every and status.iteration % every == 0:
            print(f"🔄 {monitor.get_status()}")

    def solve(self, problem: Optional[Problem] = None) -> dict:
        problem = problem or self.config.problem()
        cfg = self.config.solver
        grid = problem.grid
        lower, upper = hamiltonian_bound(problem)
        started = time.perf_counter()

        print("\n" + "="*60)
        print("🚀 Solving the ergodic control problem")
        print("="*60)
        print(f"📊 Grid: N_Q={grid.n_q} N_S={grid.n_s} L={grid.l_bar} "
              f"({int(np.prod(grid.shape)):,} unknowns)")
        print(f"📊 Costs: c0={problem.costs.c0} c1={problem.costs.c1} o={problem.costs.o} "
              f"psi={problem.costs.psi} W={problem.costs.w:g} h")
        print(f"📊 Bound: {lower} <= h <= {upper:.6g} per hour")
        print("="*60 + "\n")

        self.store.setup()
        self.history = []
        try:
            solution = solve(
                problem, tol=cfg.tol, w=cfg.w, max_iterations=cfg.max_iterations,
                on_progress=self._progress,
            )
        except ConvergenceError as e:
            print(f"\n❌ Solve failed: {e}")
            if isinstance(e.best, Solution):
                self._write_artifacts(problem, e.best, started, status='not_converged')
                print(f"💾 Partial artifacts flagged 'not_converged' in {self.store.location('')}")
            raise

        policy = self._write_artifacts(problem, solution, started, status='converged')

        print("\n" + "="*60)
        print("✅ SOLVE COMPLETE")
        print("="*60)
        print(f"📊 h = {solution.h:.6f} per hour after {solution.iterations:,} sweeps")
        print(f"📊 Final Er = {solution.final_error:.3e}, max residual = {solution.max_residual:.3e}")
        if solution.clamp_count:
            print(f"⚠️  {solution.clamp_count} clamped exponents during the run")
        print(f"💾 Artifacts: {self.store.location(POLICY_TABLE)}")
        print("="*60 + "\n")

        return {
            'success': True,
            'solution': solution,
            'policy': policy,
        }

    def _write_artifacts(self, problem: Problem, solution: Solution, started: float, status: str):
        lower, upper = hamiltonian_bound(problem)
        self.store.write_table(
            SUMMARY_TABLE,
            ['status', 'h', 'iterations', 'final_error', 'max_residual', 'clamps', 'h_lower', 'h_upper'],
            [[status, solution.h, solution.iterations, solution.final_error,
              solution.max_residual, solution.clamp_count, lower, upper]],
        )
        self.store.write_table('convergence.csv', ['iteration', 'error', 'h'], self.history)
        write_field(self.store, problem, solution.field)
        for l in range(1, problem.grid.l_bar + 1):
            self.store.write_text(
                f'phi_l{l}.gp', heatmap_script(f'phi_l{l}.csv', f'Potential, l = {l}', 'Phi')
            )

        policy = None
        if status == 'converged':
            policy = extract_policy(solution, problem)
            write_policy(self.store, problem, policy)
            rows = [[r[2], r[3], r[4]] for r in self.store.read_table(POLICY_TABLE)[1]]
            self.store.write_table('l_star.csv', ['q_norm', 's_norm', 'l_star'], rows)
            rows = [[r[2], r[3], r[5]] for r in self.store.read_table(POLICY_TABLE)[1]]
            self.store.write_table('eta_star.csv', ['q_norm', 's_norm', 'eta_star'], rows)
            self.store.write_text('l_star.gp', heatmap_script('l_star.csv', 'Optimal level L*', 'L*'))
            self.store.write_text('eta_star.gp', heatmap_script('eta_star.csv', 'Replenishment eta*', 'eta* (m3)'))

        self.store.write_metadata({
            'command': 'solve',
            'status': status,
            'config': self.config.to_dict(),
            'config_hash': self.config.content_hash(),
            'grid': problem.grid.to_dict(),
            'costs': problem.costs.to_dict(),
            'time_unit': 'hour',
            **solution.to_dict(),
            'wall_time_s': time.perf_counter() - started,
        })
        return policy
