"""
Simulation Service - Monte Carlo estimate of the long-run average cost under a
stored policy, compared with the h reported by the solve run that produced it.
"""
import time
from typing import Optional

import numpy as np

from src.config import RunConfig
from src.domain.problem import Problem
from src.domain.simulation import estimate_hamiltonian
from src.infrastructure.artifact_store import ArtifactStore
from src.services.solver_service import SUMMARY_TABLE, load_policy


class SimulationService:
    """Runs the `simulate` command."""

    def __init__(self, config: RunConfig, policy_store: ArtifactStore, store: ArtifactStore):
        self.config = config
        self.policy_store = policy_store
        self.store = store

    def simulate(self, problem: Optional[Problem] = None) -> dict:
        problem = problem or self.config.problem()
        sim = self.config.simulate
        path_config = self.config.path_config()
        started = time.perf_counter()

        print("\n" + "="*60)
        print("🚀 Monte Carlo cost estimate")
        print("="*60)
        print(f"📊 {sim.replications} replications of {sim.horizon_hours:g} h "
              f"(dt {sim.dt_hours:g} h, burn-in {sim.burn_in:.0%}, seed {self.config.seed})")
        print("="*60 + "\n")

        policy = load_policy(self.policy_store, problem)
        solver_h = None
        if self.policy_store.exists(SUMMARY_TABLE):
            header, rows = self.policy_store.read_table(SUMMARY_TABLE)
            solver_h = float(rows[0][header.index('h')])

        estimate = estimate_hamiltonian(
            problem.model, problem.transport, policy, problem.costs, path_config,
            sim.replications, seed=np.random.SeedSequence(self.config.seed),
            threads=self.config.threads,
        )

        self.store.setup()
        self.store.write_table(
            'replications.csv',
            ['replication', 'T', 'J1', 'J2', 'observations', 'average_cost'],
            estimate.rows(),
        )
        relative = None if not solver_h else (estimate.mean - solver_h) / solver_h
        self.store.write_table(
            'report.csv', ['mc_mean', 'mc_std_error', 'solver_h', 'relative_difference'],
            [[estimate.mean, estimate.std_error,
              '' if solver_h is None else solver_h, '' if relative is None else relative]],
        )
        self.store.write_metadata({
            'command': 'simulate',
            'config': self.config.to_dict(),
            'config_hash': self.config.content_hash(),
            'grid': problem.grid.to_dict(),
            'replications': sim.replications,
            'wall_time_s': time.perf_counter() - started,
        })

        print("\n" + "="*60)
        print("✅ SIMULATION COMPLETE")
        print("="*60)
        print(f"📊 Average cost: {estimate.mean:.6f} ± {estimate.std_error:.6f} per hour")
        if solver_h is not None:
            print(f"📊 Solver h:     {solver_h:.6f} per hour (difference {relative:+.2%})")
        print(f"💾 Artifacts: {self.store.location('report.csv')}")
        print("="*60 + "\n")

        return {
            'success': True,
            'estimate': estimate,
            'solver_h': solver_h,
            'relative_difference': relative,
        }
