"""
Calibration Service - identifies the streamflow model from a discharge record.
Moment matching fixes (alpha, a', b, A); the autocorrelation decay then fixes rho.
"""
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import least_squares, minimize
from scipy.special import gamma

from src.config import RunConfig
from src.domain.errors import CalibrationError, DataError, SedimentControlError
from src.domain.gcbi import (
    GcbiModel, StationaryStats, empirical_autocorrelation, empirical_stats, identify_decay,
)
from src.domain.kernel import KernelParams
from src.infrastructure.artifact_store import ArtifactStore
from src.infrastructure.discharge_reader import ingest_discharge
from src.infrastructure.multistart import multistart

ALPHA_MAX = 0.99
INFEASIBLE_RESIDUAL = 1e3
MOMENT_NAMES = ('Average', 'Standard deviation', 'Skewness', 'Kurtosis')


@dataclass(frozen=True)
class CalibrationResult:
    alpha: float
    a_prime: float
    b: float
    a_shift: float
    m1_ratio: float
    error: float
    observed: StationaryStats
    modeled: StationaryStats
    evaluations: int = 0

    @property
    def score(self) -> float:
        return self.error

    def model(self, rho: float, q_min: float) -> GcbiModel:
        kernel = KernelParams.from_scaled(self.a_prime, self.b, self.alpha, rho)
        return GcbiModel(rho=rho, q_min=q_min, a_shift=self.a_shift, kernel=kernel)

    def moment_rows(self) -> list:
        """Observed / modeled / relative error per statistic."""
        errors = np.abs(self.observed.relative_errors(self.modeled))
        return [
            [name, obs, mod, err]
            for name, obs, mod, err in zip(
                MOMENT_NAMES, self.observed.as_array(), self.modeled.as_array(), errors
            )
        ]


def _decode(x: np.ndarray) -> tuple:
    a_prime = float(np.exp(x[0]))
    b = float(np.exp(x[1]))
    alpha = float(ALPHA_MAX / (1.0 + np.exp(-x[2])))
    a_shift = float(np.exp(x[3]))
    return a_prime, b, alpha, a_shift


def _encode(a_prime: float, b: float, alpha: float, a_shift: float) -> np.ndarray:
    return np.array([np.log(a_prime), np.log(b), np.log(alpha / (ALPHA_MAX - alpha)), np.log(a_shift)])


def _modeled(x: np.ndarray, q_min: float) -> StationaryStats:
    a_prime, b, alpha, a_shift = _decode(x)
    # rho = 1 placeholder: stationary moments only depend on M_k / rho
    model = GcbiModel(rho=1.0, q_min=q_min, a_shift=a_shift, kernel=KernelParams(a_prime, b, alpha))
    return model.stationary_stats()


def _residuals(x: np.ndarray, target: StationaryStats, q_min: float) -> np.ndarray:
    try:
        with np.errstate(all='ignore'):
            modeled = _modeled(x, q_min)
        res = target.relative_errors(modeled)
    except (SedimentControlError, OverflowError, ZeroDivisionError):
        return np.full(4, INFEASIBLE_RESIDUAL)
    if not np.all(np.isfinite(res)):
        return np.full(4, INFEASIBLE_RESIDUAL)
    return res


def _error(x: np.ndarray, target: StationaryStats, q_min: float) -> float:
    return float(np.sum(_residuals(x, target, q_min) ** 2))


def _feasible_start(target: StationaryStats, q_min: float, rng: np.random.Generator) -> np.ndarray:
    """Random (M1/rho, alpha, b); a' and A follow from M1/rho and the mean equation."""
    ratio = rng.uniform(0.05, 0.6)
    alpha = rng.uniform(0.05, 0.9)
    b = float(np.exp(rng.uniform(np.log(1e-3), np.log(1e-1))))
    a_prime = ratio / (b ** (alpha - 1.0) * gamma(1.0 - alpha))
    a_shift = max((target.mean * (1.0 - ratio) - q_min) / ratio, 1e-3)
    return _encode(a_prime, b, alpha, a_shift)


@multistart(starts=20)
def _fit_once(target: StationaryStats, q_min: float, budget: int, rng: np.random.Generator):
    x0 = _feasible_start(target, q_min, rng)
    simplex = minimize(
        _error, x0, args=(target, q_min), method='Nelder-Mead',
        options={'maxfev': budget, 'xatol': 1e-12, 'fatol': 1e-24, 'adaptive': True},
    )
    polished = least_squares(
        _residuals, simplex.x, args=(target, q_min), method='lm',
        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000,
    )
    x = polished.x if _error(polished.x, target, q_min) < simplex.fun else simplex.x
    error = _error(x, target, q_min)
    if error >= 4 * INFEASIBLE_RESIDUAL ** 2:
        raise CalibrationError("start never left the infeasible region")
    a_prime, b, alpha, a_shift = _decode(x)
    return CalibrationResult(
        alpha=alpha, a_prime=a_prime, b=b, a_shift=a_shift,
        m1_ratio=KernelParams(a_prime, b, alpha).moment(1),
        error=error, observed=target, modeled=_modeled(x, q_min),
        evaluations=int(simplex.nfev + polished.nfev),
    )


def identify_from_moments(
    target: StationaryStats,
    q_min: float,
    starts: int = 20,
    budget: int = 100_000,
    tol: float = 1e-6,
    seed: Optional[int] = 0,
) -> CalibrationResult:
    """
    Moment matching of (alpha, a', b, A) minimizing Er = sum ((c_O - c_M) / c_O)^2.
    Raises CalibrationError (carrying the best fit) when Er stays above tol.
    """
    best = _fit_once(target, q_min, max(1, budget // starts), starts=starts, seed=seed)
    if best.error > tol:
        raise CalibrationError(
            f"moment matching reached Er = {best.error:.3e} > {tol:.1e}", best=best
        )
    return best


class CalibrationService:
    """Runs the `identify` and `moments` commands."""

    def __init__(self, config: RunConfig, store: ArtifactStore):
        self.config = config
        self.store = store

    def identify(self, data_path) -> dict:
        cfg = self.config.streamflow
        started = time.perf_counter()

        print("\n" + "="*60)
        print("🚀 Identifying the streamflow model")
        print("="*60)

        series = ingest_discharge(data_path)
        observed = empirical_stats(series.values)
        print(f"📊 Observed: mean={observed.mean:.4g} sd={observed.std_dev:.4g} "
              f"skew={observed.skewness:.4g} kurt={observed.kurtosis:.4g}")

        try:
            result = identify_from_moments(
                observed, cfg.q_min_m3s, starts=cfg.calibration_starts,
                budget=cfg.calibration_budget, tol=cfg.calibration_tol, seed=self.config.seed,
            )
        except CalibrationError as e:
            if e.best is not None:
                print(f"❌ Best fit so far: Er={e.best.error:.3e} alpha={e.best.alpha:.4g} "
                      f"a'={e.best.a_prime:.4g} b={e.best.b:.4g} A={e.best.a_shift:.4g}")
                self._write_moments(e.best)
            raise

        step = series.step
        max_lag = max(2, int(round(cfg.acf_max_lag_hours / step)))
        pairs = [
            (lag, omega)
            for lag, omega in empirical_autocorrelation(series.values, range(1, max_lag + 1), step)
            if 0 < omega <= 1
        ]
        if len(pairs) < 2:
            raise DataError("fewer than two positive autocorrelation values to fit the decay")
        decay, rho = identify_decay(pairs, result.m1_ratio)
        model = result.model(rho, cfg.q_min_m3s)

        self.store.setup()
        self._write_moments(result)
        self.store.write_table('parameters.csv', ['parameter', 'value'], [
            ['alpha', result.alpha],
            ['a_prime', result.a_prime],
            ['b', result.b],
            ['A', result.a_shift],
            ['M1_over_rho', result.m1_ratio],
            ['decay_per_hour', decay],
            ['rho_per_hour', rho],
            ['Er', result.error],
        ])
        self.store.write_table(
            'autocorrelation.csv', ['lag_hours', 'observed', 'modeled'],
            [[lag, omega, model.autocorrelation(lag)] for lag, omega in pairs],
        )
        self.store.write_metadata({
            'command': 'identify',
            'config': self.config.to_dict(),
            'config_hash': self.config.content_hash(),
            'data': str(data_path),
            'samples': len(series),
            'gaps': len(series.gaps),
            'evaluations': result.evaluations,
            'wall_time_s': time.perf_counter() - started,
        })

        print("\n" + "="*60)
        print("✅ IDENTIFICATION COMPLETE")
        print("="*60)
        print(f"📊 alpha={result.alpha:.4g} a'={result.a_prime:.4g} b={result.b:.4g} "
              f"A={result.a_shift:.4g}")
        print(f"📊 M1/rho={result.m1_ratio:.4g} rho={rho:.4g} 1/h (decay {decay:.4g} 1/h)")
        print(f"📊 Er={result.error:.3e}")
        print(f"💾 Artifacts: {self.store.location('parameters.csv')}")
        print("="*60 + "\n")

        return {
            'success': True,
            'result': result,
            'decay': decay,
            'rho': rho,
        }

    def _write_moments(self, result: CalibrationResult) -> None:
        self.store.setup()
        self.store.write_table(
            'moments.csv', ['Moments', 'Observed', 'Modeled', 'Relative error'],
            result.moment_rows(),
        )

    def moments(self) -> dict:
        model = self.config.streamflow.model()
        stats = model.stationary_stats()
        print("\n" + "="*60)
        print("📊 Stationary statistics of the configured streamflow model")
        print("="*60)
        print(f"   rho     = {model.rho:.6g} 1/h")
        print(f"   M1/rho  = {model.m1_ratio:.6g}")
        print(f"   decay   = {model.decay_rate:.6g} 1/h")
        print(f"   mean    = {stats.mean:.6g} m3/s")
        print(f"   std dev = {stats.std_dev:.6g} m3/s")
        print(f"   skew    = {stats.skewness:.6g}")
        print(f"   kurt    = {stats.kurtosis:.6g}")
        print("="*60 + "\n")
        return {'success': True, 'stats': stats, 'model': model}
