import numpy as np
import pytest

from src.config import GridConfig, RunConfig, SimulationConfig, SolverConfig, VerifyConfig
from src.domain.errors import ConfigError, ConvergenceError
from src.infrastructure.artifact_store import MemoryArtifactStore
from src.services.simulation_service import SimulationService
from src.services.solver_service import POLICY_TABLE, SUMMARY_TABLE, SolverService, load_policy
from src.services.verification_service import VerificationService, table_name


def small_config(**overrides) -> RunConfig:
    settings = dict(
        grid=GridConfig(n_q=6, n_s=5),
        solver=SolverConfig(max_iterations=200_000, progress_every=0),
        simulate=SimulationConfig(horizon_hours=3_000.0, replications=2),
        verify=VerifyConfig(betas=(2.0,), q_bars_m3s=(200.0,), ns=(4, 8)),
    )
    settings.update(overrides)
    return RunConfig(**settings)


@pytest.fixture
def solved_store():
    config = small_config()
    store = MemoryArtifactStore()
    result = SolverService(config, store).solve(config.problem(l_bar=2))
    return config, store, result


def test_solve_writes_maps_and_summary(solved_store):
    _, store, result = solved_store
    assert result['success']
    expected = {
        SUMMARY_TABLE, 'convergence.csv', 'phi_l1.csv', 'phi_l2.csv', 'phi_l1.gp', 'phi_l2.gp',
        POLICY_TABLE, 'l_star.csv', 'eta_star.csv', 'l_star.gp', 'eta_star.gp', 'metadata.json',
    }
    assert expected <= set(store.files)
    header, rows = store.read_table(SUMMARY_TABLE)
    assert rows[0][header.index('status')] == 'converged'
    assert float(rows[0][header.index('h')]) == pytest.approx(result['solution'].h)
    assert store.read_metadata()['status'] == 'converged'
    _, history = store.read_table('convergence.csv')
    assert len(history) == result['solution'].iterations


def test_stored_policy_round_trips(solved_store):
    config, store, result = solved_store
    problem = config.problem(l_bar=2)
    policy = load_policy(store, problem)
    original = result['policy']
    assert np.array_equal(policy.l_star, original.l_star)
    assert np.array_equal(policy.eta_star, original.eta_star)
    assert np.array_equal(policy.field.values, original.field.values)


def test_stored_policy_must_match_grid(solved_store):
    config, store, _ = solved_store
    with pytest.raises(ConfigError):
        load_policy(store, config.problem(l_bar=3))


def test_failed_solve_keeps_partial_artifacts():
    config = small_config(solver=SolverConfig(max_iterations=2, progress_every=0))
    store = MemoryArtifactStore()
    with pytest.raises(ConvergenceError):
        SolverService(config, store).solve(config.problem(l_bar=2))
    assert store.read_metadata()['status'] == 'not_converged'
    assert not store.exists(POLICY_TABLE)


def test_simulation_compares_with_solver(solved_store):
    config, store, _ = solved_store
    out = MemoryArtifactStore()
    result = SimulationService(config, store, out).simulate(config.problem(l_bar=2))
    assert result['success']
    assert result['solver_h'] is not None
    header, rows = out.read_table('report.csv')
    assert header == ['mc_mean', 'mc_std_error', 'solver_h', 'relative_difference']
    _, reps = out.read_table('replications.csv')
    assert len(reps) == 2


def test_verification_writes_one_table_per_case():
    store = MemoryArtifactStore()
    result = VerificationService(small_config(), store).verify()
    assert result['success']
    name = table_name(2.0, 200.0)
    assert name == 'convergence_beta2_qbar200.csv'
    header, rows = store.read_table(name)
    assert header[0] == 'N'
    assert [row[0] for row in rows] == ['4', '8']
    assert store.read_metadata()['failures'] == 0
