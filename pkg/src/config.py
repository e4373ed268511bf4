import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Tuple

from src.domain.errors import ConfigError
from src.domain.gcbi import GcbiModel
from src.domain.kernel import KernelParams
from src.domain.problem import CostSpec, DepletionPenalty, Grid, Problem
from src.domain.sediment import SedimentPhysics, TransportCoefficient
from src.domain.simulation import PathConfig

SECONDS_PER_HOUR = 3600.0
HOURS_PER_DAY = 24.0


@dataclass(frozen=True)
class StreamflowConfig:
    """gCBI streamflow parameters. Rates per hour, discharges in m3/s."""
    alpha: float = 0.201
    a_prime: float = 3.49e-3
    b_s_per_m3: float = 8.33e-3
    a_shift_m3s: float = 16.5
    q_min_m3s: float = 1.0
    decay_per_hour: float = 0.028       # rho - M1 from the autocorrelation fit
    rho_per_hour: Optional[float] = None  # overrides the decay-based rho

    # identification
    calibration_starts: int = 20
    calibration_budget: int = 100_000
    calibration_tol: float = 1e-6
    acf_max_lag_hours: float = 48.0

    def m1_ratio(self) -> float:
        return KernelParams.from_scaled(self.a_prime, self.b_s_per_m3, self.alpha, 1.0).moment(1)

    def rho(self) -> float:
        if self.rho_per_hour is not None:
            return self.rho_per_hour
        ratio = self.m1_ratio()
        if not ratio < 1:
            raise ConfigError(f"M1/rho = {ratio} must be below 1")
        return self.decay_per_hour / (1.0 - ratio)

    def model(self) -> GcbiModel:
        rho = self.rho()
        kernel = KernelParams.from_scaled(self.a_prime, self.b_s_per_m3, self.alpha, rho)
        return GcbiModel(rho=rho, q_min=self.q_min_m3s, a_shift=self.a_shift_m3s, kernel=kernel)


@dataclass(frozen=True)
class SedimentConfig:
    d_m: float = 0.005
    zeta: float = 0.5
    n_w: float = 0.035
    b_w_m: float = 20.0
    i_w: float = 0.0015
    theta_t: float = 0.072
    rho_p: float = 2650.0
    rho_w: float = 997.0
    g: float = 9.81
    kappa_karman: float = 0.4
    mu_b: float = 0.63
    c_m: float = 1.7
    s_bar_m3: float = 400.0
    q_bar_m3s: float = 200.0

    def physics(self) -> SedimentPhysics:
        return SedimentPhysics(
            d=self.d_m, zeta=self.zeta, n_w=self.n_w, B_w=self.b_w_m, I_w=self.i_w,
            theta_t=self.theta_t, rho_p=self.rho_p, rho_w=self.rho_w, g=self.g,
            kappa=self.kappa_karman, mu_b=self.mu_b, c_M=self.c_m,
        )

    def transport(self, q_bar: Optional[float] = None) -> TransportCoefficient:
        """Reduced F in m3 per hour."""
        q_bar = self.q_bar_m3s if q_bar is None else q_bar
        return self.physics().reduced(q_bar).in_time_unit(SECONDS_PER_HOUR)


@dataclass(frozen=True)
class CostConfig:
    c0: float = 20.0
    c1: float = 60.0
    o: float = 20.0
    psi: float = 1e-4
    w_days: float = 2.0
    l_bar: int = 10
    c1_basis: str = 'capacity'           # 'capacity': c1 per full reach, 'per_m3': c1 per m3
    penalty: str = 'indicator'
    kappa_m3: float = 0.0

    def costs(self, s_bar: float) -> CostSpec:
        if self.c1_basis not in ('capacity', 'per_m3'):
            raise ConfigError(f"c1_basis must be 'capacity' or 'per_m3', got {self.c1_basis!r}")
        return CostSpec(
            c0=self.c0, c1=self.c1, o=self.o, psi=self.psi,
            w=self.w_days * HOURS_PER_DAY,
            penalty=DepletionPenalty(self.penalty, self.kappa_m3),
            volume_unit=s_bar if self.c1_basis == 'capacity' else 1.0,
        )


@dataclass(frozen=True)
class GridConfig:
    n_q: int = 80
    n_s: int = 80
    top_boundary: str = 'reflect'


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    w: float = 0.3
    max_iterations: int = 1_000_000
    progress_every: int = 200


@dataclass(frozen=True)
class VerifyConfig:
    betas: Tuple[float, ...] = (0.5, 1.0, 2.0)
    q_bars_m3s: Tuple[float, ...] = (200.0, 300.0)
    ns: Tuple[int, ...] = (10, 20, 40, 80, 160, 320)
    amp: float = 1.0
    tol: float = 1e-10
    w: float = 0.35


@dataclass(frozen=True)
class SimulationConfig:
    dt_hours: float = 0.1
    horizon_hours: float = 1e5
    replications: int = 20
    burn_in: float = 0.1
    small_jump_cut_m3s: Optional[float] = None
    small_jump_drift: bool = True
    q0_m3s: Optional[float] = None
    s0_m3: float = 0.0
    distorted: bool = False

    def path_config(self, seed: int) -> PathConfig:
        return PathConfig(
            dt=self.dt_hours, horizon=self.horizon_hours, small_jump_cut=self.small_jump_cut_m3s,
            seed=seed, q0=self.q0_m3s, s0=self.s0_m3, small_jump_drift=self.small_jump_drift,
            burn_in=self.burn_in, distorted=self.distorted,
        )


SECTIONS = {
    'streamflow': StreamflowConfig,
    'sediment': SedimentConfig,
    'costs': CostConfig,
    'grid': GridConfig,
    'solver': SolverConfig,
    'verify': VerifyConfig,
    'simulate': SimulationConfig,
}
TOP_LEVEL = ('threads', 'seed', 'output_root')


def _section(cls, values: dict, name: str):
    if not isinstance(values, dict):
        raise ConfigError(f"section '{name}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {', '.join(unknown)}")
    cleaned = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
    try:
        return cls(**cleaned)
    except TypeError as e:
        raise ConfigError(f"invalid section '{name}': {e}") from e


@dataclass(frozen=True)
class RunConfig:
    """All command parameter blocks plus process-level settings."""
    streamflow: StreamflowConfig = field(default_factory=StreamflowConfig)
    sediment: SedimentConfig = field(default_factory=SedimentConfig)
    costs: CostConfig = field(default_factory=CostConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    simulate: SimulationConfig = field(default_factory=SimulationConfig)
    threads: int = 1
    seed: int = 0
    output_root: str = 'runs'

    @classmethod
    def from_dict(cls, data: dict) -> 'RunConfig':
        unknown = sorted(set(data) - set(SECTIONS) - set(TOP_LEVEL))
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        kwargs = {name: _section(SECTIONS[name], data[name], name) for name in SECTIONS if name in data}
        for key in TOP_LEVEL:
            if key in data:
                kwargs[key] = data[key]
        config = cls(**kwargs)
        config.validate()
        return config

    @classmethod
    def from_file(cls, path) -> 'RunConfig':
        path = Path(path)
        try:
            with open(path, encoding='utf-8') as f:
                data = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must contain a JSON object")
        return cls.from_dict(data)

    def with_env(self) -> 'RunConfig':
        """Apply SEDCTRL_THREADS, SEDCTRL_SEED and SEDCTRL_OUTPUT_ROOT overrides."""
        overrides = {}
        try:
            if os.getenv('SEDCTRL_THREADS'):
                overrides['threads'] = int(os.getenv('SEDCTRL_THREADS'))
            if os.getenv('SEDCTRL_SEED'):
                overrides['seed'] = int(os.getenv('SEDCTRL_SEED'))
        except ValueError as e:
            raise ConfigError(f"invalid environment override: {e}") from e
        if os.getenv('SEDCTRL_OUTPUT_ROOT'):
            overrides['output_root'] = os.getenv('SEDCTRL_OUTPUT_ROOT')
        return replace(self, **overrides) if overrides else self

    def validate(self) -> None:
        """Re-check every domain invariant by building the domain objects."""
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        self.problem()
        self.path_config()
        if not (self.solver.tol > 0 and 0 < self.solver.w < 1):
            raise ConfigError("solver needs tol > 0 and 0 < w < 1")
        if not (self.verify.tol > 0 and 0 < self.verify.w < 1):
            raise ConfigError("verify needs tol > 0 and 0 < w < 1")
        if self.simulate.replications < 2:
            raise ConfigError("simulate needs at least 2 replications")

    def problem(self, **cost_overrides) -> Problem:
        """The control problem in hours; keyword arguments override CostConfig fields."""
        costs = replace(self.costs, **cost_overrides) if cost_overrides else self.costs
        sediment = self.sediment
        grid = Grid(
            n_q=self.grid.n_q, n_s=self.grid.n_s, q_bar=sediment.q_bar_m3s,
            s_bar=sediment.s_bar_m3, l_bar=costs.l_bar, top_boundary=self.grid.top_boundary,
        )
        return Problem(
            model=self.streamflow.model(),
            transport=sediment.transport(),
            costs=costs.costs(sediment.s_bar_m3),
            grid=grid,
        )

    def path_config(self) -> PathConfig:
        return self.simulate.path_config(self.seed)

    def to_dict(self) -> dict:
        return asdict(self)

    def content_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()
