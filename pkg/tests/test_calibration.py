import numpy as np
import pytest

from src.config import RunConfig, StreamflowConfig
from src.domain.errors import CalibrationError, DataError
from src.domain.gcbi import StationaryStats
from src.domain.simulation import PathConfig, sample_path
from src.infrastructure.artifact_store import MemoryArtifactStore
from src.services.calibration_service import (
    CalibrationService, _encode, _error, identify_from_moments,
)

TABLE_OBSERVED = StationaryStats(mean=5.014, std_dev=15.39, skewness=11.98, kurtosis=198.0)


def test_true_parameters_are_a_zero_residual_point(model):
    target = model.stationary_stats()
    config = StreamflowConfig()
    x = _encode(config.a_prime, config.b_s_per_m3, config.alpha, config.a_shift_m3s)
    assert _error(x, target, config.q_min_m3s) < 1e-20


def test_identification_recovers_statistics_of_known_parameters(model):
    target = model.stationary_stats()
    result = identify_from_moments(target, q_min=1.0, starts=20, budget=100_000, tol=1e-6, seed=0)
    assert result.error <= 1e-6
    assert result.modeled.as_array() == pytest.approx(target.as_array(), rel=1e-3)
    assert 0.0 <= result.alpha < 1.0
    assert 0.0 < result.m1_ratio < 1.0
    names = [row[0] for row in result.moment_rows()]
    assert names == ['Average', 'Standard deviation', 'Skewness', 'Kurtosis']


@pytest.mark.slow
def test_published_table_leaves_a_residual_floor():
    result = identify_from_moments(TABLE_OBSERVED, q_min=1.0, starts=20, budget=100_000, tol=1e-2, seed=0)
    assert 1e-3 < result.error < 1e-2
    assert result.modeled.mean == pytest.approx(TABLE_OBSERVED.mean, rel=5e-2)


def test_unreachable_tolerance_carries_best_fit():
    with pytest.raises(CalibrationError) as info:
        identify_from_moments(TABLE_OBSERVED, q_min=1.0, starts=2, budget=200, tol=0.0, seed=1)
    assert info.value.best is not None
    assert info.value.best.error > 0.0


def write_series(path, values):
    start = np.datetime64('2018-01-01T00:00')
    stamps = start + np.arange(values.size).astype('timedelta64[h]')
    path.write_text(
        'timestamp,discharge\n' + ''.join(f"{stamp}:00,{value:.6f}\n" for stamp, value in zip(stamps, values)),
        encoding='utf-8',
    )
    return path


def test_identify_writes_all_tables(tmp_path, model):
    values = sample_path(model, PathConfig(dt=1.0, horizon=20_000.0), np.random.default_rng(2)).values
    data = write_series(tmp_path / 'gauge.csv', values)
    config = RunConfig(streamflow=StreamflowConfig(
        calibration_starts=3, calibration_budget=6_000, calibration_tol=1.0,
    ))
    store = MemoryArtifactStore()
    result = CalibrationService(config, store).identify(data)
    assert result['success']
    assert result['rho'] > result['decay'] > 0.0
    for name in ('moments.csv', 'parameters.csv', 'autocorrelation.csv', 'metadata.json'):
        assert store.exists(name)
    header, rows = store.read_table('parameters.csv')
    assert header == ['parameter', 'value']
    assert [row[0] for row in rows] == [
        'alpha', 'a_prime', 'b', 'A', 'M1_over_rho', 'decay_per_hour', 'rho_per_hour', 'Er',
    ]
    assert store.read_metadata()['samples'] == values.size


def test_identify_rejects_bad_data(tmp_path):
    data = tmp_path / 'gauge.csv'
    data.write_text('2020-01-01T00:00:00,1.0\n2020-01-01T01:00:00,-1.0\n', encoding='utf-8')
    with pytest.raises(DataError):
        CalibrationService(RunConfig(), MemoryArtifactStore()).identify(data)


def test_moments_report_the_configured_model():
    result = CalibrationService(RunConfig(), MemoryArtifactStore()).moments()
    assert result['success']
    assert result['stats'].mean == pytest.approx(5.014, rel=5e-3)
