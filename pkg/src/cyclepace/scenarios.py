"""Sensitivity studies: wind sweeps, rain cross-conditions, execution deviations."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .dynamics import (
    CourseTables,
    DEFAULT_DT,
    EnvParams,
    PowerStrategy,
    Status,
    Weather,
    energy_rate,
    rate_matrix,
    run_batch,
    simulate,
)
from .errors import InputError
from .optimizer import PowerLevels, TemceConfig, optimize
from .power import RiderProfile
from .track import TrackGrid

Sampler = Callable[[np.random.Generator, int], np.ndarray]


def uniform(lo: float, hi: float) -> Sampler:
    def draw(rng, size):
        return rng.uniform(lo, hi, size)

    return draw


def fixed(value: float) -> Sampler:
    def draw(rng, size):
        return np.full(size, float(value))

    return draw


@dataclass
class WindSweepResult:
    entries: list  # (wind_speed, wind_heading, finish_time, status)

    def arrays(self):
        speed = np.array([e[0] for e in self.entries])
        heading = np.array([e[1] for e in self.entries])
        time = np.array([e[2] for e in self.entries])
        return speed, heading, time

    @property
    def dnf_count(self) -> int:
        return sum(e[3] is Status.DNF for e in self.entries)


def wind_sweep(
    strategy: PowerStrategy,
    grid: TrackGrid,
    rider: RiderProfile,
    env: EnvParams,
    speeds: Sampler = uniform(0.0, 10.0),
    headings: Sampler = uniform(0.0, 2 * math.pi),
    trials: int = 10_000,
    seed: int = 0,
    rain: bool = False,
    dt: float = DEFAULT_DT,
) -> WindSweepResult:
    """Simulate a fixed strategy under ``trials`` independently drawn winds.

    Trial ``i`` draws its speed and then its heading from a generator seeded
    with ``(seed, i)``.
    """
    if trials < 1:
        raise InputError("trials must be >= 1")
    entries = []
    for i in range(trials):
        rng = np.random.default_rng([seed, i])
        ws = float(speeds(rng, 1)[0])
        wh = float(headings(rng, 1)[0]) % (2 * math.pi)
        out = simulate(strategy, grid, Weather(ws, wh, rain), rider, env, dt)
        entries.append((ws, wh, out.finish_time, out.status))
    return WindSweepResult(entries)


@dataclass
class CrossConditionTable:
    """``times[i][j]``: strategy optimized under condition i, simulated under condition j."""

    conditions: tuple
    times: np.ndarray
    strategies: dict

    def to_json(self) -> dict:
        return {
            "conditions": list(self.conditions),
            "rows": [
                {"optimized_for": c, **{f"sim_{d}_s": float(self.times[i, j]) for j, d in enumerate(self.conditions)}}
                for i, c in enumerate(self.conditions)
            ],
            "strategies_w": {c: list(s.levels) for c, s in self.strategies.items()},
        }


def rain_cross_table(
    grid: TrackGrid,
    rider: RiderProfile,
    env: EnvParams,
    levels: PowerLevels,
    cfg: TemceConfig,
    wind: Weather = Weather(),
) -> CrossConditionTable:
    conditions = ("no_rain", "rain")
    weathers = [replace(wind, rain=False), replace(wind, rain=True)]
    strategies = {}
    times = np.empty((2, 2))
    for i, w in enumerate(weathers):
        strategies[conditions[i]] = optimize(grid, rider, w, env, levels, cfg).strategy
    for i, c in enumerate(conditions):
        for j, w in enumerate(weathers):
            times[i, j] = simulate(strategies[c], grid, w, rider, env, cfg.dt).finish_time
    return CrossConditionTable(conditions, times, strategies)


@dataclass(frozen=True)
class DeviationConfig:
    split_range: tuple
    sigma_fraction: float = 1.0 / 50.0
    trials: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.sigma_fraction < 0:
            raise InputError("sigma_fraction must be non-negative")
        if self.trials < 1:
            raise InputError("trials must be >= 1")
        lo, hi = self.split_range
        if not 0 <= lo < hi:
            raise InputError("split range must satisfy 0 <= start < end")


@dataclass
class DeviationResult:
    nominal_split: float
    splits: np.ndarray  # finite split times of the trials that reached the far boundary
    trial_ids: np.ndarray
    dnf_count: int
    s_start: float
    s_end: float

    def summary(self) -> dict:
        finite = self.splits
        return {
            "nominal_split_s": self.nominal_split,
            "mean_s": float(finite.mean()) if finite.size else math.nan,
            "p95_s": float(np.percentile(finite, 95)) if finite.size else math.nan,
            "dnf_count": self.dnf_count,
        }


def snap_to_bounds(grid: TrackGrid, s_start: float, s_end: float) -> tuple[int, int]:
    """Indices of the segment boundaries nearest to the requested split range."""
    b = np.asarray(grid.segment_bounds)
    if s_end > grid.total_length + 1e-6:
        raise InputError("split range extends past the finish")
    i = int(np.argmin(np.abs(b - s_start)))
    j = int(np.argmin(np.abs(b - s_end)))
    if j <= i:
        j = min(i + 1, len(b) - 1)
        i = j - 1
    return i, j


def perturbed_powers(strategy: PowerStrategy, rider: RiderProfile, cfg: DeviationConfig) -> np.ndarray:
    base = np.asarray(strategy.levels)
    out = np.empty((cfg.trials, len(base)))
    cap = 0.99 * rider.curve.p_max
    for trial in range(cfg.trials):
        z = np.random.default_rng([cfg.seed, trial]).standard_normal(len(base))
        out[trial] = np.clip(base + cfg.sigma_fraction * base * z, 0.0, cap)
    return out


def deviation_splits(
    strategy: PowerStrategy,
    grid: TrackGrid,
    rider: RiderProfile,
    weather: Weather,
    env: EnvParams,
    cfg: DeviationConfig,
    dt: float = DEFAULT_DT,
    jobs: int = 1,
) -> DeviationResult:
    """Split-time distribution when every segment's power carries Normal(0, (σP)²) noise."""
    strategy.validate(grid, rider)
    i, j = snap_to_bounds(grid, *cfg.split_range)
    tables = CourseTables.build(grid, weather, rider, env)

    def split_of(splits):
        t_end = splits[:, j - 1]
        t_start = splits[:, i - 1] if i > 0 else np.zeros(len(splits))
        return t_end - t_start

    base = np.asarray(strategy.levels)[None, :]
    nominal = run_batch(base, tables, dt, rate=np.atleast_2d(energy_rate(base[0], rider)))
    power = perturbed_powers(strategy, rider, cfg)
    res = run_batch(power, tables, dt, rate=rate_matrix(power, rider), jobs=jobs)
    split = split_of(res.splits)
    ok = np.isfinite(split)
    return DeviationResult(
        nominal_split=float(split_of(nominal.splits)[0]),
        splits=split[ok],
        trial_ids=np.flatnonzero(ok),
        dnf_count=int((~ok).sum()),
        s_start=float(grid.segment_bounds[i]),
        s_end=float(grid.segment_bounds[j]),
    )
