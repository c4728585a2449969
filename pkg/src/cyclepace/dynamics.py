"""Coupled kinematics and fatigue model integrated with explicit Euler steps.

The force balance and speed cap are evaluated from per-gridpoint tables
(:class:`CourseTables`) that are linearly interpolated at the rider's
horizontal position. Every simulation path, scalar or batched, runs through
the same compiled step so their results agree bit for bit.
"""

from __future__ import annotations

import enum
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernel
from .errors import InputError, UnsustainablePowerError
from .power import RiderProfile, omni_pd_inverse, T_HORIZON
from .track import R_MAX, TrackGrid, TrackSample

V_EPS = _kernel.V_EPS
V_START = 1.0
V_CAP = 1.0e3
DEFAULT_DT = 0.1
RECOVERY_TIME = 7200.0


class OverBankedWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class Weather:
    wind_speed: float = 0.0
    wind_heading: float = 0.0  # direction the air moves toward, radians from north
    rain: bool = False

    def __post_init__(self):
        if self.wind_speed < 0:
            raise InputError("wind speed must be non-negative")


@dataclass(frozen=True)
class EnvParams:
    g: float = 9.81
    mu_r_dry: float = 0.0025
    mu_s_dry: float = 0.8
    rain_rr_multiplier: float = 1.30
    mu_s_wet: float = 0.5
    air_density_factor: float = 1.0

    def __post_init__(self):
        vals = (self.g, self.mu_r_dry, self.mu_s_dry, self.rain_rr_multiplier, self.mu_s_wet, self.air_density_factor)
        if min(vals) <= 0:
            raise InputError("environment constants must be positive")
        if not self.mu_s_wet < self.mu_s_dry:
            raise InputError("wet static friction must be below dry static friction")

    def mu_r(self, weather: Weather) -> float:
        return self.mu_r_dry * (self.rain_rr_multiplier if weather.rain else 1.0)

    def mu_s(self, weather: Weather) -> float:
        return self.mu_s_wet if weather.rain else self.mu_s_dry


class SimState(NamedTuple):
    x_h: float
    v: float
    energy: float
    t: float


class Status(str, enum.Enum):
    FINISHED = "Finished"
    DNF = "DidNotFinish"


@dataclass(frozen=True)
class PowerStrategy:
    levels: tuple

    def __init__(self, levels):
        object.__setattr__(self, "levels", tuple(float(p) for p in levels))

    def __len__(self):
        return len(self.levels)

    def validate(self, grid: TrackGrid, rider: RiderProfile) -> None:
        if len(self.levels) != grid.n_segments:
            raise InputError(f"strategy has {len(self.levels)} levels for {grid.n_segments} segments")
        for p in self.levels:
            if not (0.0 <= p < rider.curve.p_max):
                raise InputError(f"power level {p} W outside [0, p_max={rider.curve.p_max}) W")

    def to_json(self) -> list:
        return list(self.levels)


@dataclass
class SimOutcome:
    finish_time: float
    status: Status
    splits: list  # (s, t) at segment ends that were reached
    trajectory: np.ndarray | None = None  # columns t, x_h, v, energy, power

    @property
    def finished(self) -> bool:
        return self.status is Status.FINISHED

    def states(self) -> list[SimState]:
        if self.trajectory is None:
            return []
        return [SimState(r[1], r[2], r[3], r[0]) for r in self.trajectory]


# ---------------------------------------------------------------------------
# force model


def airspeed(v: float, heading: float, weather: Weather) -> float:
    return v - weather.wind_speed * math.cos(heading - weather.wind_heading)


def net_force(
    state: SimState,
    power: float,
    sample: TrackSample,
    weather: Weather,
    rider: RiderProfile,
    env: EnvParams,
) -> float:
    """Propulsion minus drag, gravity and rolling resistance (N)."""
    va = airspeed(state.v, sample.heading, weather)
    drag = 0.5 * rider.drag_coeff * rider.frontal_area * env.air_density_factor * va * abs(va)
    grav = rider.mass * env.g * math.sin(sample.theta)
    roll = env.mu_r(weather) * rider.mass * env.g * math.cos(sample.theta)
    return power / max(state.v, V_EPS) - drag - grav - roll


def _vmax_array(radius, bank, mu_s, g):
    radius = np.asarray(radius, dtype=float)
    bank = np.asarray(bank, dtype=float)
    den = np.cos(bank) - mu_s * np.sin(bank)
    num = radius * g * (np.sin(bank) + mu_s * np.cos(bank))
    over = den <= 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.sqrt(np.where(over, 0.0, num / np.where(over, 1.0, den)))
    v = np.where(over | (radius >= R_MAX), V_CAP, np.minimum(v, V_CAP))
    return v, over


def v_max_curve(sample: TrackSample, env: EnvParams, weather: Weather) -> float:
    """Cornering speed limit for the sample's radius and bank angle."""
    if sample.radius <= 0:
        raise InputError("curvature radius must be positive")
    v, over = _vmax_array(sample.radius, sample.bank, env.mu_s(weather), env.g)
    if over:
        warnings.warn("bank angle too steep for the friction coefficient; speed cap not enforced", OverBankedWarning)
    return float(v)


def energy_rate(power, rider: RiderProfile):
    """dE/dt for a constant power (scalar or array)."""
    p = np.asarray(power, dtype=float)
    if np.any(p < 0):
        raise InputError("power must be non-negative")
    curve = rider.curve
    if np.any(p >= curve.p_max):
        raise UnsustainablePowerError(f"power {p.max():.1f} W >= p_max {curve.p_max:.1f} W")
    out = (curve.p_c - p) / (RECOVERY_TIME * curve.p_c)
    above = p > curve.p_c
    if np.any(above):
        out = np.where(above, -1.0 / omni_pd_inverse(curve, np.where(above, p, curve.p_max * 0.5)), out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class CourseTables:
    """Gridded force coefficients for a fixed (course, weather, rider, environment)."""

    grid: TrackGrid
    sin_t: np.ndarray
    cos_t: np.ndarray
    wind: np.ndarray
    vmax: np.ndarray
    mass: float
    drag_k: float
    grav_f: float
    roll_f: float
    p_c: float
    over_banked: int

    @classmethod
    def build(cls, grid: TrackGrid, weather: Weather, rider: RiderProfile, env: EnvParams) -> "CourseTables":
        theta = grid.theta
        vmax, over = _vmax_array(grid.radius, grid.bank, env.mu_s(weather), env.g)
        wind = weather.wind_speed * np.cos(grid.heading - weather.wind_heading)
        arrays = [np.sin(theta), np.cos(theta), wind, vmax]
        if len(theta) == 1:
            arrays = [np.repeat(a, 2) for a in arrays]
        arrays = [np.ascontiguousarray(a, dtype=np.float64) for a in arrays]
        mg = rider.mass * env.g
        return cls(
            grid,
            *arrays,
            mass=float(rider.mass),
            drag_k=0.5 * rider.drag_coeff * rider.frontal_area * env.air_density_factor,
            grav_f=mg,
            roll_f=env.mu_r(weather) * mg,
            p_c=float(rider.curve.p_c),
            over_banked=int(over.sum()),
        )

    def vmax_at(self, x: float) -> float:
        n = len(self.vmax)
        u = x / self.grid.spacing
        j = int(u)
        if j >= n - 1:
            j, f = n - 2, min(u - (n - 2), 1.0)
        else:
            f = u - j
        return float(self.vmax[j] + f * (self.vmax[j + 1] - self.vmax[j]))

    def args(self):
        return (self.sin_t, self.cos_t, self.wind, self.vmax, float(self.grid.spacing),
                self.mass, self.drag_k, self.grav_f, self.roll_f, self.p_c)


def t_sim_max(grid: TrackGrid) -> float:
    return 4.0 * grid.total_length / 5.0


def _bounds(grid: TrackGrid) -> np.ndarray:
    return np.asarray(grid.segment_bounds, dtype=np.float64)


def step(
    state: SimState,
    strategy: PowerStrategy,
    grid: TrackGrid,
    weather: Weather,
    rider: RiderProfile,
    env: EnvParams,
    dt: float = DEFAULT_DT,
    tables: CourseTables | None = None,
) -> SimState:
    """One Euler step of the coupled kinematics/fatigue system."""
    if dt <= 0:
        raise InputError("dt must be positive")
    tables = tables or CourseTables.build(grid, weather, rider, env)
    level = strategy.levels[grid.segment_index(state.x_h)]
    rate = energy_rate(level, rider)
    x, v, e, _ = _kernel.advance(state.x_h, state.v, state.energy, level, rate, *tables.args(), dt)
    return SimState(x, v, e, state.t + dt)


# ---------------------------------------------------------------------------
# batch integration


@dataclass
class BatchResult:
    status: np.ndarray  # kernel status codes
    finish: np.ndarray
    splits: np.ndarray | None
    x: np.ndarray
    v: np.ndarray
    e: np.ndarray
    t: np.ndarray


def rate_matrix(power: np.ndarray, rider: RiderProfile) -> np.ndarray:
    """Energy rates for a power matrix, inverting the curve once per distinct value."""
    uniq, inv = np.unique(power, return_inverse=True)
    return energy_rate(uniq, rider)[inv].reshape(power.shape)


def run_batch(
    power: np.ndarray,
    tables: CourseTables,
    dt: float = DEFAULT_DT,
    *,
    rate: np.ndarray | None = None,
    rider: RiderProfile | None = None,
    init: SimState | None = None,
    stop_x: float = math.inf,
    record_splits: bool = True,
    jobs: int = 1,
) -> BatchResult:
    """Integrate many per-segment power rows over one set of course tables.

    ``init`` starts every row from the same state (default: the rolling
    start). With ``jobs > 1`` rows are split into contiguous chunks run on a
    thread pool; rows are independent so the result does not depend on it.
    """
    power = np.ascontiguousarray(power, dtype=np.float64)
    if power.ndim != 2:
        raise InputError("power must be a 2-D (simulations x segments) array")
    n, a = power.shape
    grid = tables.grid
    if a != grid.n_segments:
        raise InputError(f"power rows have {a} levels for {grid.n_segments} segments")
    if rate is None:
        if rider is None:
            raise InputError("need rider or precomputed rates")
        rate = rate_matrix(power, rider)
    rate = np.ascontiguousarray(rate, dtype=np.float64)
    init = init or SimState(0.0, V_START, 1.0, 0.0)

    x = np.full(n, float(init.x_h))
    v = np.full(n, float(init.v))
    e = np.full(n, float(init.energy))
    t = np.full(n, float(init.t))
    status = np.zeros(n, np.int64)
    finish = np.full(n, np.nan)
    splits = np.full((n, a) if record_splits else (1, 1), np.nan)
    bounds = _bounds(grid)
    common = tables.args() + (float(dt), t_sim_max(grid), float(grid.total_length), float(stop_x))

    def work(sl):
        sp = splits[sl] if record_splits else splits
        _kernel.integrate(x[sl], v[sl], e[sl], t[sl], power[sl], rate[sl], bounds, *common,
                          status[sl], finish[sl], sp, record_splits)

    jobs = max(1, min(int(jobs), n))
    if jobs == 1:
        work(slice(0, n))
    else:
        edges = np.linspace(0, n, jobs + 1).astype(int)
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(work, [slice(lo, hi) for lo, hi in zip(edges[:-1], edges[1:])]))
    return BatchResult(status, finish, splits if record_splits else None, x, v, e, t)


def _outcome(status_code, finish, split_row, grid, trajectory=None) -> SimOutcome:
    bounds = grid.segment_bounds
    splits = []
    if split_row is not None:
        splits = [(bounds[k + 1], float(ts)) for k, ts in enumerate(split_row) if not math.isnan(ts)]
    if status_code == _kernel.FINISHED:
        return SimOutcome(float(finish), Status.FINISHED, splits, trajectory)
    return SimOutcome(math.inf, Status.DNF, splits, trajectory)


def _check_strategy(strategy, grid, rider):
    if not isinstance(strategy, PowerStrategy):
        strategy = PowerStrategy(strategy)
    strategy.validate(grid, rider)
    return strategy


def simulate(
    strategy: PowerStrategy,
    grid: TrackGrid,
    weather: Weather,
    rider: RiderProfile,
    env: EnvParams,
    dt: float = DEFAULT_DT,
    record_trajectory: bool = False,
    tables: CourseTables | None = None,
) -> SimOutcome:
    strategy = _check_strategy(strategy, grid, rider)
    tables = tables or CourseTables.build(grid, weather, rider, env)
    power = np.asarray(strategy.levels, dtype=np.float64)
    rate = np.asarray(energy_rate(power, rider), dtype=np.float64).reshape(power.shape)
    if not record_trajectory:
        res = run_batch(power[None, :], tables, dt, rate=rate[None, :])
        return _outcome(res.status[0], res.finish[0], res.splits[0], grid)

    t_max = t_sim_max(grid)
    traj = np.empty((int(math.ceil(t_max / dt)) + 3, 5))
    splits = np.full(grid.n_segments, np.nan)
    code, fin, rows = _kernel.integrate_recording(
        0.0, V_START, 1.0, 0.0, power, rate, _bounds(grid), *tables.args(),
        float(dt), t_max, float(grid.total_length), traj, splits,
    )
    return _outcome(code, fin, splits, grid, trajectory=traj[:rows].copy())


def simulate_batch(
    strategies: Sequence[PowerStrategy],
    grid: TrackGrid,
    weather: Weather,
    rider: RiderProfile,
    env: EnvParams,
    dt: float = DEFAULT_DT,
    jobs: int = 1,
    tables: CourseTables | None = None,
) -> list[SimOutcome]:
    """Simulate many strategies in lockstep; equal to mapping :func:`simulate`."""
    if len(strategies) == 0:
        return []
    strategies = [_check_strategy(s, grid, rider) for s in strategies]
    tables = tables or CourseTables.build(grid, weather, rider, env)
    power = np.array([s.levels for s in strategies], dtype=np.float64)
    res = run_batch(power, tables, dt, rider=rider, jobs=jobs)
    return [_outcome(res.status[i], res.finish[i], res.splits[i], grid) for i in range(len(strategies))]
