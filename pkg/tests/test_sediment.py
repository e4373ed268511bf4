import numpy as np
import pytest

from src.domain.errors import ConfigError, DomainError
from src.domain.sediment import SedimentPhysics, TransportCoefficient


def test_slope_correction_of_default_reach(physics):
    assert physics.slope_correction == pytest.approx(1 - 0.0015 * 2650 / (0.63 * 1653), rel=1e-12)
    assert physics.slope_correction == pytest.approx(0.99618, abs=1e-5)


def test_threshold_discharge_inverts_shields_number(physics):
    q_hat = physics.threshold_discharge()
    assert q_hat == pytest.approx(4.73, rel=1e-2)
    assert physics.shields_number(q_hat) == pytest.approx(physics.theta_t, rel=1e-10)


def test_full_physics_transport_rates(physics):
    assert physics.transport_rate(10.0, 1.0) == pytest.approx(5.51e-3, rel=2e-2)
    assert physics.transport_rate(100.0, 1.0) == pytest.approx(9.25e-2, rel=2e-2)


def test_no_transport_below_threshold_or_from_empty_storage(physics):
    q_hat = physics.threshold_discharge()
    assert physics.transport_rate(0.5 * q_hat, 100.0) == 0.0
    assert physics.transport_rate(q_hat, 100.0) == 0.0
    assert physics.transport_rate(150.0, 0.0) == 0.0


@pytest.mark.parametrize('q', [5.0, 10.0, 57.3, 150.0, 199.9])
def test_reduced_law_matches_full_physics(physics, q):
    reduced = physics.reduced(200.0)
    assert reduced.rate(q, 1.0) == pytest.approx(physics.transport_rate(q, 1.0), rel=1e-10)


def test_reduced_law_saturates_at_truncation(physics):
    reduced = physics.reduced(200.0)
    assert reduced.rate(300.0, 1.0) == reduced.rate(200.0, 1.0)
    assert physics.transport_rate(300.0, 1.0) > reduced.rate(300.0, 1.0)


def test_transport_is_monotone_in_discharge(transport):
    q = np.linspace(0.0, 250.0, 501)
    rates = transport.rate(q, 1.0)
    assert np.all(np.diff(rates) >= 0)
    assert np.all(rates >= 0)


def test_holder_bound_holds_on_random_pairs(transport):
    rng = np.random.default_rng(3)
    q1, q2 = rng.uniform(0, transport.q_bar, size=(2, 2000))
    lhs = np.abs(transport.rate(q1, 1.0) - transport.rate(q2, 1.0))
    rhs = transport.holder_constant() * np.abs(q1 ** 0.6 - q2 ** 0.6)
    assert np.all(lhs <= rhs * (1 + 1e-12) + 1e-15)


def test_time_unit_conversion(physics):
    per_second = physics.reduced(200.0)
    per_hour = per_second.in_time_unit(3600.0)
    assert per_hour.rate(80.0, 1.0) == pytest.approx(3600.0 * per_second.rate(80.0, 1.0), rel=1e-12)
    assert per_hour.q_hat == per_second.q_hat


def test_array_evaluation_broadcasts(transport):
    q = np.array([[0.0], [50.0], [100.0]])
    s = np.array([[0.0, 10.0]])
    rates = transport.rate(q, s)
    assert rates.shape == (3, 2)
    assert np.all(rates[:, 0] == 0.0)
    assert rates[2, 1] > rates[1, 1] > rates[0, 1] == 0.0


def test_negative_discharge_is_rejected(physics, transport):
    with pytest.raises(DomainError):
        transport.rate(-1.0, 1.0)
    with pytest.raises(DomainError):
        physics.manning_depth(-0.1)


@pytest.mark.parametrize('overrides', [
    {'zeta': 1.0}, {'d': 0.0}, {'I_w': 0.2}, {'rho_p': 900.0},
])
def test_invalid_physics_is_rejected(overrides):
    with pytest.raises(ConfigError):
        SedimentPhysics(**overrides)


def test_truncation_must_exceed_threshold():
    with pytest.raises(ConfigError):
        TransportCoefficient(f1=1.0, f2=1.0, q_hat=5.0, q_bar=4.0)
