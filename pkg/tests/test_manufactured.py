import numpy as np
import pytest
from scipy.integrate import quad

from src.config import SedimentConfig, StreamflowConfig
from src.domain.errors import ConfigError, DomainError
from src.domain.manufactured import (
    CONVERGENCE_COLUMNS, FAILED, ManufacturedCase, convergence_study, error_norms,
    exact_potential, manufactured_problem, manufactured_source, observed_rate,
)
from src.domain.problem import Grid, PotentialField


def case_for(transport, beta=2.0, amp=1.0):
    return ManufacturedCase(beta=beta, q_bar=transport.q_bar, s_bar=400.0, amp=amp)


def continuous_residual(case, model, transport, q, s):
    """Exact pair plugged into the reduced equation, jump integral by adaptive quadrature."""
    phi = lambda x: -case.amp * (x / case.q_bar) * (s / case.s_bar) ** case.beta
    phi_q = -case.amp * (s / case.s_bar) ** case.beta / case.q_bar
    phi_s = -case.amp * (q / case.q_bar) * case.beta * (s / case.s_bar) ** (case.beta - 1) / case.s_bar
    integrand = lambda z: (phi(q) - phi(q + z)) * model.kernel.density(z)
    jumps = quad(integrand, 0.0, 1.0, limit=200)[0] + quad(integrand, 1.0, np.inf, limit=200)[0]
    generator = (
        model.rho * (q - model.q_min) * phi_q
        + float(transport.rate(q, s)) * phi_s
        + (q + model.a_shift) * jumps
    )
    return case.h_exact - manufactured_source(case, model, transport, q, s) + generator


def test_source_without_storage_is_the_hamiltonian(model, transport):
    case = case_for(transport, beta=1.0)
    q = np.array([0.0, 3.0, 50.0, 200.0])
    assert manufactured_source(case, model, transport, q, 0.0) == pytest.approx(np.ones(4))


def test_source_below_transport_threshold(model, transport):
    case = case_for(transport, beta=1.0)
    s = 200.0
    expected = 1.0 + 0.5 * (model.q_min + model.a_shift) * model.jump_moment(1) / case.q_bar
    assert manufactured_source(case, model, transport, model.q_min, s) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize('beta', [0.5, 1.0, 2.0])
@pytest.mark.parametrize('q,s', [(2.0, 50.0), (37.5, 120.0), (150.0, 399.0)])
def test_exact_pair_solves_the_continuous_equation(model, transport, beta, q, s):
    case = case_for(transport, beta=beta)
    assert continuous_residual(case, model, transport, q, s) == pytest.approx(0.0, abs=1e-8)


def test_source_rejects_negative_states(model, transport):
    with pytest.raises(DomainError):
        manufactured_source(case_for(transport), model, transport, -1.0, 0.0)


def test_case_validation():
    with pytest.raises(ConfigError):
        ManufacturedCase(beta=0.0, q_bar=200.0, s_bar=400.0)
    with pytest.raises(ConfigError):
        ManufacturedCase(beta=1.0, q_bar=200.0, s_bar=400.0, phi0=1.0)


def test_exact_potential_is_gauged_at_origin(transport):
    case = case_for(transport, beta=2.0, amp=1.5)
    field = exact_potential(case, case.grid(4))
    assert field.values.shape == (5, 5, 1)
    assert np.all(field.values[0] == 0.0)
    assert np.all(field.values[:, 0] == 0.0)
    assert field.at(4, 4, 1) == pytest.approx(-1.5)


def test_manufactured_problem_uses_reduced_equation(model, transport):
    problem = manufactured_problem(case_for(transport), model, transport, 6)
    assert not problem.switching
    assert problem.grid.l_bar == 1
    assert problem.source_values().shape == (7, 7)


class TestErrorNorms:
    grid = Grid(n_q=4, n_s=5, q_bar=1.0, s_bar=1.0)

    def test_identical_fields_have_zero_error(self):
        field = PotentialField(np.random.default_rng(1).normal(size=self.grid.shape))
        norms = error_norms(field, field, self.grid, h_num=1.25)
        assert norms.l1 == norms.l2 == norms.linf == 0.0
        assert norms.h_error == pytest.approx(0.25)

    def test_constant_offset(self):
        exact = PotentialField(np.zeros(self.grid.shape))
        numeric = PotentialField(np.full(self.grid.shape, -0.3))
        norms = error_norms(numeric, exact, self.grid, h_num=0.9)
        assert norms.l1 == pytest.approx(0.3)
        assert norms.l2 == pytest.approx(0.3)
        assert norms.linf == pytest.approx(0.3)
        assert norms.h_error == pytest.approx(-0.1)

    def test_mismatched_fields(self):
        with pytest.raises(ConfigError):
            error_norms(PotentialField(np.zeros((3, 3, 1))), PotentialField(np.zeros(self.grid.shape)), self.grid)


def test_observed_rate():
    assert observed_rate(2e-2, 1e-2, 10, 20) == pytest.approx(1.0)
    assert observed_rate(4e-2, 1e-2, 10, 20) == pytest.approx(2.0)
    assert np.isnan(observed_rate(0.0, 1e-2, 10, 20))


def test_grid_sizes_must_increase(model, transport):
    with pytest.raises(ConfigError):
        convergence_study(case_for(transport), model, transport, [8, 8])


def test_small_study_layout(model, transport):
    rows = convergence_study(case_for(transport), model, transport, [8, 16], threads=2)
    assert [row.n for row in rows] == [8, 16]
    assert all(row.failure is None for row in rows)
    assert rows[1].errors['l1'] < rows[0].errors['l1']
    assert set(rows[0].rates) == {'H', 'l1', 'l2', 'linf'}
    assert rows[0].rates['l1'] > 0
    assert rows[1].rates == {}
    cells = rows[1].as_row()
    assert len(cells) == len(CONVERGENCE_COLUMNS)
    assert cells[5:] == ['', '', '', '']


def test_thread_count_does_not_change_results(model, transport):
    single = convergence_study(case_for(transport, beta=1.0), model, transport, [6, 8], threads=1)
    double = convergence_study(case_for(transport, beta=1.0), model, transport, [6, 8], threads=2)
    assert [r.as_row() for r in single] == [r.as_row() for r in double]


def test_failed_runs_stay_in_the_table(model, transport):
    rows = convergence_study(case_for(transport), model, transport, [6, 8], max_iterations=1)
    assert all(row.failure for row in rows)
    assert rows[0].as_row()[1:5] == [FAILED] * 4
    assert rows[0].rates == {}


# ---------------------------------------------------------------------------
# Full convergence tables
# ---------------------------------------------------------------------------

def study(beta, q_bar, ns):
    sediment = SedimentConfig()
    transport = sediment.transport(q_bar)
    model = StreamflowConfig().model()
    case = ManufacturedCase(beta=beta, q_bar=q_bar, s_bar=sediment.s_bar_m3)
    return convergence_study(case, model, transport, ns, threads=len(ns))


def assert_consistent_h(rows):
    for row in rows:
        assert row.failure is None
        if row.n >= 40:
            assert abs(row.norms.h_error) <= 1e-4


@pytest.mark.slow
def test_convex_case_is_first_order():
    rows = study(2.0, 200.0, [10, 20, 40, 80, 160])
    assert_consistent_h(rows)
    assert 2.90e-2 / 2 <= rows[0].norms.linf <= 2.90e-2 * 2
    for row in rows[:-1]:
        assert 0.85 <= row.rates['l1'] <= 1.25


@pytest.mark.slow
def test_concave_case_converges_at_reduced_order():
    rows = study(0.5, 200.0, [10, 20, 40, 80, 160])
    assert_consistent_h(rows)
    linf = [row.norms.linf for row in rows]
    assert linf == sorted(linf, reverse=True)
    for row in rows[:-1]:
        assert 0.40 <= row.rates['linf'] <= 0.55


@pytest.mark.slow
def test_linear_case_is_truncation_dominated():
    narrow = study(1.0, 200.0, [10, 160])
    wide = study(1.0, 300.0, [10, 160])
    assert_consistent_h(narrow)
    assert max(narrow[0].errors.values()) <= 5e-3
    assert wide[1].norms.linf < narrow[1].norms.linf
