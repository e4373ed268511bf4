"""
Monte Carlo simulation of the streamflow, the managed sediment storage and the
long-run average cost.

Jumps below the cut eps_z are dropped (their mean is optionally kept as drift),
so between jumps Q relaxes exactly towards

    Q* = (rho Q_min + m A) / (rho - m),   m = int_0^eps_z z nu(dz),

and jumps arrive by thinning against the bound (max(Q, Q*) + A) nu([eps_z, inf)),
which dominates the intensity until the next accepted jump.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from src.domain.errors import ConfigError, DomainError, NumericError
from src.domain.gcbi import GcbiModel
from src.domain.kernel import KernelParams
from src.domain.problem import CostSpec
from src.domain.sediment import TransportCoefficient
from src.domain.solver import Policy

TABLE_NODES = 10_000
TABLE_RTOL = 1e-4
DEFAULT_CUT_FRACTION = 1e-3


@dataclass(frozen=True)
class PathConfig:
    """Simulation settings; times in hours, discharges in m3/s, volumes in m3."""
    dt: float = 0.1
    horizon: float = 1e5
    small_jump_cut: Optional[float] = None   # None: dropped first moment is 1e-3 M1
    seed: int = 0
    q0: Optional[float] = None               # None: stationary mean
    s0: float = 0.0
    small_jump_drift: bool = True
    burn_in: float = 0.1                     # fraction of the horizon discarded
    distorted: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"time step must be positive, got {self.dt}")
        if not self.horizon > 0:
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        if self.small_jump_cut is not None and self.small_jump_cut < 0:
            raise ConfigError("small-jump cut must be non-negative")
        if self.q0 is not None and self.q0 < 0:
            raise ConfigError("initial discharge must be non-negative")
        if self.s0 < 0:
            raise ConfigError("initial storage must be non-negative")
        if not 0 <= self.burn_in < 1:
            raise ConfigError(f"burn-in fraction must lie in [0, 1), got {self.burn_in}")


@dataclass
class CostAccumulator:
    """Running cost terms: j1 = int f(S) dt, j2 = sum of o + C(eta)."""
    j1: float = 0.0
    j2: float = 0.0
    observations: int = 0
    time: float = 0.0

    def since(self, earlier: 'CostAccumulator') -> 'CostAccumulator':
        return CostAccumulator(
            j1=self.j1 - earlier.j1,
            j2=self.j2 - earlier.j2,
            observations=self.observations - earlier.observations,
            time=self.time - earlier.time,
        )

    @property
    def average_cost(self) -> float:
        return (self.j1 + self.j2) / self.time if self.time > 0 else 0.0

    def to_dict(self) -> dict:
        return {
            'time': self.time, 'j1': self.j1, 'j2': self.j2,
            'observations': self.observations, 'average_cost': self.average_cost,
        }


class JumpSampler:
    """
    Jump sizes from nu restricted to [cut, inf) by inverse CDF on a log-spaced table.
    The table mass is checked against adaptive quadrature on construction.
    """

    def __init__(self, kernel: KernelParams, cut: float, nodes: int = TABLE_NODES):
        if not cut > 0:
            raise DomainError("jump sampling needs a positive small-jump cut (infinite activity)")
        self.kernel = kernel
        self.cut = cut
        self.rate = kernel.mass_above(cut)
        upper = max(10.0 * cut, cut + 60.0 / kernel.b)
        self._log_z = np.linspace(np.log(cut), np.log(upper), nodes)
        z = np.exp(self._log_z)
        cdf = cumulative_trapezoid(kernel.density(z) * z, self._log_z, initial=0.0)
        if abs(cdf[-1] - self.rate) > TABLE_RTOL * self.rate:
            raise NumericError(
                f"jump-size table mass {cdf[-1]:.6e} disagrees with quadrature {self.rate:.6e}"
            )
        self._cdf = cdf / cdf[-1]

    def sample(self, rng: np.random.Generator, size=None):
        u = rng.random(size)
        return np.exp(np.interp(u, self._cdf, self._log_z))


@dataclass(frozen=True)
class DischargePath:
    times: np.ndarray          # recording grid
    values: np.ndarray
    integral: float            # exact int_0^T Q dt
    horizon: float
    jump_times: np.ndarray
    jump_sizes: np.ndarray

    @property
    def time_average(self) -> float:
        return self.integral / self.horizon


class _Streamflow:
    """Exact relaxation plus thinning, shared by path sampling and managed runs."""

    def __init__(self, model: GcbiModel, config: PathConfig):
        self.model = model
        self.a_shift = model.a_shift
        kernel = model.kernel
        if kernel is None:
            self.sampler = None
            drift = 0.0
        else:
            cut = config.small_jump_cut
            if cut is None:
                cut = kernel.small_jump_cut(DEFAULT_CUT_FRACTION)
            self.sampler = JumpSampler(kernel, cut)
            drift = kernel.truncated_first_moment(0.0, cut) if config.small_jump_drift else 0.0
        self.kappa = model.rho - drift
        self.q_star = (model.rho * model.q_min + drift * model.a_shift) / self.kappa

    def relax(self, q: float, tau: float) -> float:
        return self.q_star + (q - self.q_star) * np.exp(-self.kappa * tau)

    def relax_integral(self, q: float, tau: float) -> float:
        return self.q_star * tau + (q - self.q_star) * -np.expm1(-self.kappa * tau) / self.kappa

    def crossing_time(self, q: float, level: float) -> float:
        """Time for the relaxation started at q to reach `level` (inf if never)."""
        if (q - level) * (level - self.q_star) <= 0 or q == self.q_star:
            return 0.0 if q == level else np.inf
        return float(np.log((q - self.q_star) / (level - self.q_star)) / self.kappa)

    def candidate_rate(self, q: float, scale: float = 1.0) -> float:
        if self.sampler is None:
            return 0.0
        return (max(q, self.q_star) + self.a_shift) * self.sampler.rate * scale

    def next_candidate(self, t: float, q: float, rng: np.random.Generator, scale: float = 1.0) -> float:
        rate = self.candidate_rate(q, scale)
        return np.inf if rate == 0.0 else t + rng.exponential(1.0 / rate)


def sample_erlang(l: int, w: float, rng: np.random.Generator, size=None):
    """Sum of l independent exponential waiting times with mean w."""
    if l < 1:
        raise DomainError(f"Erlang shape must be >= 1, got {l}")
    if not w > 0:
        raise DomainError(f"Erlang scale must be positive, got {w}")
    if size is None:
        return float(rng.exponential(w, size=l).sum())
    return rng.exponential(w, size=(size, l)).sum(axis=1)


def sample_path(
    model: GcbiModel,
    config: PathConfig,
    rng: np.random.Generator,
    record_step: Optional[float] = None,
) -> DischargePath:
    """Discharge path on [0, horizon] recorded every `record_step` hours (default dt)."""
    step = config.dt if record_step is None else record_step
    flow = _Streamflow(model, config)
    q = model.stationary_mean if config.q0 is None else config.q0
    times = np.arange(int(np.floor(config.horizon / step)) + 1) * step
    values = np.empty_like(times)
    jump_times, jump_sizes = [], []
    integral = 0.0
    t = 0.0
    k = 0
    bound = max(q, flow.q_star) + flow.a_shift
    candidate = flow.next_candidate(t, q, rng)

    while True:
        t_next = min(candidate, config.horizon)
        # fill recording points inside (t, t_next]
        k_end = np.searchsorted(times, t_next, side='right')
        if k_end > k:
            values[k:k_end] = flow.relax(q, times[k:k_end] - t)
            k = k_end
        integral += flow.relax_integral(q, t_next - t)
        q = flow.relax(q, t_next - t)
        t = t_next
        if t >= config.horizon:
            break
        if q + flow.a_shift > bound:
            # the bound only fails through round-off; widen and redraw
            bound = q + flow.a_shift
        elif rng.random() * bound < q + flow.a_shift:
            z = float(flow.sampler.sample(rng))
            q += z
            jump_times.append(t)
            jump_sizes.append(z)
        bound = max(q, flow.q_star) + flow.a_shift
        candidate = flow.next_candidate(t, q, rng)
    values[k:] = q  # grid points rounded just past the horizon

    return DischargePath(
        times=times, values=values, integral=float(integral), horizon=config.horizon,
        jump_times=np.array(jump_times), jump_sizes=np.array(jump_sizes),
    )


class _ManagedRun:
    """One replication of the controlled system under a fixed policy."""

    def __init__(self, model, transport, policy, costs, config, rng):
        self.flow = _Streamflow(model, config)
        self.transport = transport
        self.policy = policy
        self.costs = costs
        self.config = config
        self.rng = rng
        self.s_bar = policy.grid.s_bar
        self.acc = CostAccumulator()
        self.q = model.stationary_mean if config.q0 is None else config.q0
        self.s = config.s0
        self.phi_scale = 1.0
        if config.distorted and costs.psi > 0:
            spread = np.ptp(policy.field.values)
            self.phi_scale = float(np.exp(costs.psi * spread))

    def penalty(self, s: float) -> float:
        return self.costs.penalty.at(s)

    def advance(self, tau: float) -> None:
        """Move Q exactly and S by explicit Euler over tau, accumulating f(S) dt."""
        flow = self.flow
        q_hat = self.transport.q_hat
        remaining = tau
        while remaining > 0.0:
            if self.s <= 0.0 or self.q <= q_hat:
                # no transport: S stays put until Q relaxes above Q_hat or a jump arrives
                h = remaining
                if self.s > 0.0 and flow.q_star > q_hat:
                    h = min(remaining, flow.crossing_time(self.q, q_hat))
                    if h == 0.0:
                        h = min(remaining, self.config.dt)
                self.acc.j1 += self.penalty(self.s) * h
            else:
                h = min(self.config.dt, remaining, max(flow.crossing_time(self.q, q_hat), 1e-12))
                rate = float(self.transport.rate(self.q, self.s))
                if rate * h >= self.s:
                    hit = self.s / rate
                    self.acc.j1 += self.penalty(self.s) * hit + self.penalty(0.0) * (h - hit)
                    self.s = 0.0
                else:
                    self.acc.j1 += self.penalty(self.s) * h
                    self.s -= rate * h
            self.q = flow.relax(self.q, h)
            remaining = 0.0 if h >= remaining else remaining - h
        self.acc.time += tau

    def observe(self) -> int:
        l_next, eta = self.policy.lookup(self.q, self.s)
        eta = min(eta, self.s_bar - self.s)
        self.acc.j2 += self.costs.o + self.costs.replenishment_cost(eta)
        self.acc.observations += 1
        self.s = min(self.s + eta, self.s_bar)
        return l_next

    def distortion(self, z: float, level: int) -> float:
        grid = self.policy.grid
        i, j = grid.nearest_vertex(self.q, self.s)
        i_target = min(grid.nearest_vertex(self.q + z, self.s)[0], grid.n_q)
        return self.policy.phi_star(i, j, level, i_target - i)

    def run(self) -> CostAccumulator:
        cfg = self.config
        flow = self.flow
        rng = self.rng
        w = self.costs.w
        level, _ = self.policy.lookup(self.q, self.s)
        # distorted runs walk the Erlang phases one by one; level = phases left
        if cfg.distorted:
            next_obs = rng.exponential(w)
        else:
            next_obs = sample_erlang(level, w, rng)
        t = 0.0
        burn_time = cfg.burn_in * cfg.horizon
        start = CostAccumulator() if burn_time == 0.0 else None
        bound = max(self.q, flow.q_star) + flow.a_shift
        candidate = flow.next_candidate(t, self.q, rng, self.phi_scale)

        while t < cfg.horizon:
            marks = [candidate, next_obs, cfg.horizon]
            if start is None:
                marks.append(burn_time)
            t_next = min(marks)
            self.advance(t_next - t)
            t = t_next
            if start is None and t >= burn_time:
                start = replace(self.acc)
            if t >= cfg.horizon:
                break
            if t == next_obs:
                if cfg.distorted and level > 1:
                    level -= 1
                    next_obs = t + rng.exponential(w)
                else:
                    level = self.observe()
                    next_obs = t + (rng.exponential(w) if cfg.distorted else sample_erlang(level, w, rng))
            elif t == candidate:
                intensity = self.q + flow.a_shift
                if intensity > bound:
                    bound = intensity
                else:
                    z = float(flow.sampler.sample(rng))
                    accept = intensity / bound
                    if cfg.distorted and self.phi_scale > 1.0:
                        accept *= self.distortion(z, level) / self.phi_scale
                    if rng.random() < accept:
                        self.q += z
                bound = max(self.q, flow.q_star) + flow.a_shift
                candidate = flow.next_candidate(t, self.q, rng, self.phi_scale)
        return self.acc.since(start)


def simulate_managed(
    model: GcbiModel,
    transport: TransportCoefficient,
    policy: Policy,
    costs: CostSpec,
    config: PathConfig,
    rng: np.random.Generator,
) -> CostAccumulator:
    """
    Costs accrued after the burn-in under `policy`: f(S) integrated over time and
    o + C(eta) paid at Erlang-distributed observation times.
    """
    if abs(policy.grid.q_bar - transport.q_bar) > 1e-12 * transport.q_bar:
        raise ConfigError(
            f"policy grid Qbar {policy.grid.q_bar} does not match transport truncation {transport.q_bar}"
        )
    if config.s0 > policy.grid.s_bar:
        raise ConfigError(f"initial storage {config.s0} exceeds capacity {policy.grid.s_bar}")
    return _ManagedRun(model, transport, policy, costs, config, rng).run()


@dataclass(frozen=True)
class HamiltonianEstimate:
    mean: float
    std_error: float
    replications: List[CostAccumulator]

    def rows(self) -> list:
        """(replication, T, J1, J2, observations, average cost) per replication."""
        return [
            [k, acc.time, acc.j1, acc.j2, acc.observations, acc.average_cost]
            for k, acc in enumerate(self.replications)
        ]


def estimate_hamiltonian(
    model: GcbiModel,
    transport: TransportCoefficient,
    policy: Policy,
    costs: CostSpec,
    config: PathConfig,
    replications: int,
    seed: Optional[np.random.SeedSequence] = None,
    threads: int = 1,
) -> HamiltonianEstimate:
    """Mean of per-replication average costs and its standard error."""
    if replications < 2:
        raise DomainError(f"need at least 2 replications, got {replications}")
    root = np.random.SeedSequence(config.seed) if seed is None else seed
    streams = [np.random.default_rng(s) for s in root.spawn(replications)]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(
            lambda rng: simulate_managed(model, transport, policy, costs, config, rng), streams
        ))
    averages = np.array([acc.average_cost for acc in results])
    return HamiltonianEstimate(
        mean=float(averages.mean()),
        std_error=float(averages.std(ddof=1) / np.sqrt(replications)),
        replications=results,
    )
