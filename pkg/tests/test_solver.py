import itertools
from dataclasses import replace

import numpy as np
import pytest

from src.config import CostConfig, GridConfig, RunConfig, SedimentConfig
from src.domain.errors import ConvergenceError, DomainError
from src.domain.problem import PotentialField
from src.domain.solver import (
    Policy, Solution, extract_policy, hamiltonian_bound, max_vertex_residual, solve, sweep,
)
from src.services.solver_service import solve_many

MAX_ITERATIONS = 500_000


def solved(problem, tol=1e-9, **kwargs):
    return solve(problem, tol=tol, w=0.3, max_iterations=MAX_ITERATIONS, **kwargs)


def test_constant_potential_problem_has_closed_form_h(problem_factory):
    problem = problem_factory(n_q=6, n_s=5, l_bar=1, penalty='none', o=20.0, w=48.0)
    solution = solved(problem)
    assert solution.h == pytest.approx(20.0 / 48.0, rel=1e-12)
    assert np.abs(solution.field.values).max() == pytest.approx(0.0, abs=1e-12)
    assert solution.iterations <= 2


def test_bound_examples(problem_factory):
    lower, upper = hamiltonian_bound(problem_factory(o=20.0, w=2.0))
    assert lower == 0.0
    assert upper == pytest.approx(11.0)
    assert hamiltonian_bound(problem_factory(o=1e-12, w=2.0))[1] == pytest.approx(1.0)
    assert hamiltonian_bound(problem_factory(o=2.0, w=2.0, penalty="none"))[1] == pytest.approx(1.0)


SWEEP = [
    {'l_bar': l_bar, 'o': o, 'psi': psi}
    for l_bar, o, psi in itertools.product((1, 2, 3, 4, 5), (5.0, 40.0), (0.0, 1e-2))
]


@pytest.mark.parametrize('params', SWEEP, ids=lambda p: f"L{p['l_bar']}-o{p['o']:g}-psi{p['psi']:g}")
def test_converged_h_respects_a_priori_bound(problem_factory, params):
    problem = problem_factory(n_q=5, n_s=5, w=48.0, **params)
    solution = solved(problem, tol=1e-8)
    lower, upper = hamiltonian_bound(problem)
    assert lower <= solution.h <= upper
    assert solution.final_error <= 1e-8
    assert solution.max_residual <= 1e-5
    assert solution.clamp_count == 0
    assert solution.field.at(0, 0, 1) == 0.0


def test_solution_is_unique_up_to_the_gauge(problem_factory):
    problem = problem_factory(n_q=6, n_s=5, l_bar=3, psi=1e-3)
    from_zero = solved(problem, tol=1e-10)
    start = PotentialField(np.random.default_rng(11).uniform(-50, 50, problem.grid.shape))
    from_random = solved(problem, tol=1e-10, initial=start)
    assert from_random.h == pytest.approx(from_zero.h, abs=1e-6)
    assert np.abs(from_random.field.values - from_zero.field.values).max() <= 1e-5


def test_constant_shift_of_initial_guess_changes_nothing(problem_factory):
    problem = problem_factory(n_q=5, n_s=4, l_bar=2)
    start = np.random.default_rng(12).normal(size=problem.grid.shape)
    base = solved(problem, initial=PotentialField(start))
    shifted = solved(problem, initial=PotentialField(start + 123.0))
    assert shifted.h == pytest.approx(base.h, abs=1e-7)
    assert np.abs(shifted.field.values - base.field.values).max() <= 1e-6


def test_sweep_leaves_a_fixed_point_in_place(problem_factory):
    problem = problem_factory(n_q=5, n_s=4, l_bar=2)
    solution = solved(problem, tol=1e-11)
    before = solution.field.values.copy()
    h, field, err = sweep((solution.h, solution.field), problem, 0.3)
    assert err <= 1e-9
    assert h == pytest.approx(solution.h, abs=1e-8)
    assert np.array_equal(solution.field.values, before)
    assert field.values is not solution.field.values


@pytest.mark.parametrize('w', [0.0, 1.0, -0.2])
def test_relaxation_weight_must_lie_in_unit_interval(problem_factory, w):
    problem = problem_factory(n_q=3, n_s=3, l_bar=1)
    with pytest.raises(DomainError):
        solve(problem, w=w)
    with pytest.raises(DomainError):
        sweep((0.0, PotentialField.zeros(problem.grid)), problem, w)


def test_iteration_cap_raises_with_last_iterate(problem_factory):
    problem = problem_factory(n_q=5, n_s=4, l_bar=2)
    with pytest.raises(ConvergenceError) as info:
        solve(problem, tol=1e-14, max_iterations=3)
    best = info.value.best
    assert isinstance(best, Solution)
    assert best.iterations == 3
    assert best.field.values.shape == problem.grid.shape


def test_initial_guess_shape_is_checked(problem_factory):
    problem = problem_factory(n_q=3, n_s=3, l_bar=1)
    with pytest.raises(DomainError):
        solve(problem, initial=PotentialField(np.zeros((2, 2, 1))))


def test_progress_callback_sees_every_macro_iteration(problem_factory):
    problem = problem_factory(n_q=4, n_s=4, l_bar=2)
    seen = []
    solution = solved(problem, on_progress=lambda monitor: seen.append(monitor.current.iteration))
    assert seen == list(range(1, solution.iterations + 1))


def test_reported_residual_matches_recomputation(problem_factory):
    problem = problem_factory(n_q=5, n_s=4, l_bar=2, psi=1e-3)
    solution = solved(problem)
    assert max_vertex_residual(solution, problem) == pytest.approx(solution.max_residual)


class TestPolicy:
    def test_flat_potential_never_replenishes(self, problem_factory):
        problem = problem_factory(n_q=4, n_s=4, l_bar=3)
        flat = Solution(h=0.0, field=PotentialField.zeros(problem.grid), iterations=0, final_error=0.0)
        policy = extract_policy(flat, problem)
        assert np.all(policy.eta_star == 0.0)
        assert np.all(policy.l_star == 1)
        assert policy.phi_star(1, 1, 1, 2) == 1.0

    def test_expensive_replenishment_is_never_used(self, problem_factory):
        problem = problem_factory(n_q=5, n_s=5, l_bar=2, c0=1e6)
        solution = solved(problem)
        policy = extract_policy(solution, problem)
        assert np.ptp(solution.field.values) < 1e6
        assert np.all(policy.eta_star == 0.0)

    def test_policy_stays_within_capacity_and_levels(self, problem_factory):
        problem = problem_factory(n_q=5, n_s=5, l_bar=3, psi=1e-3)
        policy = extract_policy(solved(problem), problem)
        grid = problem.grid
        assert np.all(policy.eta_star + grid.s_nodes[None, :] <= grid.s_bar + 1e-9)
        assert np.all((policy.l_star >= 1) & (policy.l_star <= grid.l_bar))
        assert policy.l_star.shape == grid.shape[:2]

    def test_worst_case_distortion(self, problem_factory):
        problem = problem_factory(n_q=4, n_s=3, l_bar=1, psi=0.5)
        values = np.zeros(problem.grid.shape)
        values[3, 1, 0] = 2.0
        policy = Policy(
            l_star=np.ones((5, 4), dtype=int), eta_star=np.zeros((5, 4)),
            field=PotentialField(values), psi=0.5, grid=problem.grid,
        )
        assert policy.phi_star(1, 1, 1, 2) == pytest.approx(np.exp(1.0))
        assert policy.phi_star(1, 1, 1, 0) == 1.0
        with pytest.raises(DomainError):
            policy.phi_star(3, 1, 1, 2)

    def test_lookup_snaps_to_nearest_vertex(self, problem_factory):
        problem = problem_factory(n_q=4, n_s=4, l_bar=2)
        l_star = np.ones((5, 5), dtype=int)
        l_star[1, 3] = 2
        eta = np.zeros((5, 5))
        eta[1, 3] = 100.0
        policy = Policy(l_star=l_star, eta_star=eta, field=PotentialField.zeros(problem.grid),
                        psi=0.0, grid=problem.grid)
        assert policy.lookup(60.0, 290.0) == (2, 100.0)
        assert policy.lookup(0.0, 0.0) == (1, 0.0)

    def test_policy_rejects_foreign_solution(self, problem_factory):
        small = problem_factory(n_q=3, n_s=3, l_bar=1)
        large = problem_factory(n_q=4, n_s=3, l_bar=1)
        flat = Solution(h=0.0, field=PotentialField.zeros(small.grid), iterations=0, final_error=0.0)
        with pytest.raises(DomainError):
            extract_policy(flat, large)


def coarse_application() -> RunConfig:
    """dQ = 5 m3/s puts one vertex just above the transport threshold; W L = 20 days."""
    return RunConfig(
        sediment=SedimentConfig(q_bar_m3s=100.0),
        grid=GridConfig(n_q=20, n_s=8),
        costs=CostConfig(l_bar=5, w_days=4.0),
    )


def test_coarse_grid_replenishes_above_the_transport_threshold():
    problem = coarse_application().problem()
    solution = solve(problem, tol=1e-6, w=0.3, max_iterations=MAX_ITERATIONS)
    costs = problem.costs
    never_replenish = costs.penalty.at(0.0) + costs.o / (problem.grid.l_bar * costs.w)
    assert solution.h < never_replenish - 0.02
    policy = extract_policy(solution, problem)
    above = problem.grid.q_nodes > problem.transport.q_hat
    assert above[1] and not above[0]
    assert np.any(policy.eta_star[above, :] > 0.0)


def test_absorbing_top_row_pins_h_to_the_top_row_cost():
    config = coarse_application()
    config = replace(config, grid=replace(config.grid, top_boundary='absorb'))
    problem = config.problem()
    solution = solve(problem, tol=1e-6, w=0.3, max_iterations=MAX_ITERATIONS)
    costs = problem.costs
    assert solution.h == pytest.approx(1.0 + costs.o / (problem.grid.l_bar * costs.w), abs=1e-3)


def test_solve_many_returns_failures_in_place(problem_factory):
    good = problem_factory(n_q=4, n_s=4, l_bar=1)
    results = solve_many([good, good], tol=1e-8, threads=2, max_iterations=MAX_ITERATIONS)
    assert results[0].h == results[1].h
    failed = solve_many([good], tol=1e-14, max_iterations=2)
    assert isinstance(failed[0], ConvergenceError)


# ---------------------------------------------------------------------------
# Full-resolution application checks
# ---------------------------------------------------------------------------

def application(n=80) -> RunConfig:
    return RunConfig(grid=GridConfig(n_q=n, n_s=n))


@pytest.fixture(scope='module')
def default_solution():
    problem = application().problem()
    return problem, solve(problem, tol=1e-8, w=0.3)


@pytest.mark.slow
def test_no_replenishment_during_high_flow(default_solution):
    problem, solution = default_solution
    policy = extract_policy(solution, problem)
    high = problem.grid.q_nodes / problem.grid.q_bar >= 0.2
    assert np.all(policy.eta_star[high, :] == 0.0)


@pytest.mark.slow
def test_uniqueness_at_application_resolution(default_solution):
    problem, solution = default_solution
    start = PotentialField(np.random.default_rng(5).uniform(-1, 1, problem.grid.shape))
    other = solve(problem, tol=1e-8, w=0.3, initial=start)
    assert other.h == pytest.approx(solution.h, abs=1e-6)
    scale = max(1.0, np.ptp(solution.field.values))
    assert np.abs(other.field.values - solution.field.values).max() <= 1e-4 * scale


@pytest.mark.slow
@pytest.mark.parametrize('name,overrides', [
    ('o', [{'o': 10.0}, {'o': 20.0}, {'o': 35.0}]),
    ('psi', [{'psi': 5e-5}, {'psi': 1e-3}, {'psi': 1e-2}]),
])
def test_h_increases_with_observation_cost_and_aversion(name, overrides):
    config = application()
    results = solve_many([config.problem(**o) for o in overrides], tol=1e-8, threads=3)
    hs = [r.h for r in results]
    assert hs[0] < hs[1] < hs[2], f"{name}: {hs}"


@pytest.mark.slow
def test_h_decreases_with_finer_erlang_levels():
    config = application()
    overrides = [
        {'l_bar': l_bar, 'w_days': 20.0 / l_bar} for l_bar in (1, 10, 30)
    ]
    results = solve_many([config.problem(**o) for o in overrides], tol=1e-8, threads=3)
    hs = [r.h for r in results]
    assert hs[0] > hs[1] > hs[2]


@pytest.mark.slow
def test_full_resolution_spot_check():
    solution = solve(application(320).problem(), tol=1e-8, w=0.3)
    assert 0.57 <= solution.h <= 0.61
