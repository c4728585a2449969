"""Tree Exploration with Monte-Carlo Evaluation (TEMCE) over discrete power levels.

Segments are decided one at a time. For every candidate level at the current
segment, ``n`` random completions of the remaining segments are simulated and
the candidate is scored by the ``k``-th lowest finishing time.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import (
    CourseTables,
    DEFAULT_DT,
    EnvParams,
    PowerStrategy,
    SimOutcome,
    SimState,
    V_START,
    Weather,
    _kernel,
    energy_rate,
    run_batch,
    simulate,
)
from .errors import InfeasibleCourseError, InputError, SearchSpaceTooLarge
from .power import RiderProfile
from .track import TrackGrid

EXHAUSTIVE_CAP = 10**6


@dataclass(frozen=True)
class PowerLevels:
    levels: tuple

    def __init__(self, levels):
        object.__setattr__(self, "levels", tuple(float(p) for p in levels))
        if not self.levels:
            raise InputError("power levels must be non-empty")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise InputError("power levels must be strictly increasing")

    def __len__(self):
        return len(self.levels)

    def validate(self, rider: RiderProfile) -> None:
        if self.levels[0] < 0 or self.levels[-1] >= rider.curve.p_max:
            raise InputError("power levels must lie in [0, p_max)")
        if self.levels[0] > rider.curve.p_c:
            raise InputError("at least one power level must be at or below critical power")

    @classmethod
    def default(cls, rider: RiderProfile, count: int = 8) -> "PowerLevels":
        """``count`` levels spaced geometrically over ``[0.5 P_C, 0.95 P_max]``."""
        lo, hi = 0.5 * rider.curve.p_c, 0.95 * rider.curve.p_max
        return cls(np.geomspace(lo, hi, count) if count > 1 else [lo])


@dataclass(frozen=True)
class TemceConfig:
    n: int = 1000
    k: int | None = None  # None: max(1, n // 100)
    seed: int = 0
    dt: float = DEFAULT_DT
    jobs: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise InputError("n must be >= 1")
        if self.k is None:
            object.__setattr__(self, "k", max(1, self.n // 100))
        if not 1 <= self.k <= self.n:
            raise InputError("k must satisfy 1 <= k <= n")
        if self.dt <= 0:
            raise InputError("dt must be positive")

    def to_json(self) -> dict:
        return {"n": self.n, "k": self.k, "seed": self.seed, "dt": self.dt}


@dataclass
class OptimizationResult:
    strategy: PowerStrategy
    predicted: SimOutcome
    rollout_count: int
    per_segment_stats: list  # per segment: list of (candidate_w, kth_time_s)
    config: TemceConfig
    levels: PowerLevels
    simulated: int = 0  # distinct rollouts actually integrated

    def chosen(self, segment: int) -> float:
        return self.strategy.levels[segment]


def _stream_key(seed: int, segment: int, candidate: int) -> np.ndarray:
    return np.random.SeedSequence([seed, segment, candidate]).generate_state(2, np.uint64)


def _draw(key: np.ndarray, rollout: int, count: int, b: int) -> np.ndarray:
    bitgen = np.random.Philox(key=key, counter=np.array([0, rollout, 0, 0], dtype=np.uint64))
    return np.random.Generator(bitgen).integers(0, b, size=count)


def rollout_draws(seed: int, segment: int, candidate: int, rollout: int, count: int, b: int) -> np.ndarray:
    """Level indices for one rollout's remaining segments.

    A Philox stream keyed by ``(seed, segment, candidate)`` with the rollout
    number in its counter, so a draw never depends on evaluation order or
    batch size.
    """
    return _draw(_stream_key(seed, segment, candidate), rollout, count, b)


def _kth(times: np.ndarray, k: int) -> float:
    return float(np.partition(times, k - 1)[k - 1])


def _advance_prefix(state, level, rate_value, tables, dt, stop_x, a):
    """Carry a paused prefix state across one more fixed segment."""
    power = np.full((1, a), level)
    rate = np.full((1, a), rate_value)
    res = run_batch(power, tables, dt, rate=rate, init=state, stop_x=stop_x, record_splits=False)
    if res.status[0] != _kernel.PAUSED:
        return None
    return SimState(float(res.x[0]), float(res.v[0]), float(res.e[0]), float(res.t[0]))


def optimize(
    grid: TrackGrid,
    rider: RiderProfile,
    weather: Weather,
    env: EnvParams,
    levels: PowerLevels,
    cfg: TemceConfig,
) -> OptimizationResult:
    levels.validate(rider)
    tables = CourseTables.build(grid, weather, rider, env)
    L = np.asarray(levels.levels)
    rates = np.atleast_1d(energy_rate(L, rider))
    a, b, n, k = grid.n_segments, len(L), cfg.n, cfg.k
    bounds = grid.segment_bounds

    chosen: list[int] = []
    stats = []
    simulated = 0
    # The trajectory up to the first step at or past bounds[i] depends only on
    # the fixed prefix, so rollouts resume from that paused state.
    state = SimState(0.0, V_START, 1.0, 0.0)
    for i in range(a):
        if i > 0:
            state = _advance_prefix(state, L[chosen[-1]], rates[chosen[-1]], tables, cfg.dt, bounds[i], a)
            if state is None:
                raise InfeasibleCourseError(f"fixed prefix fails before segment {i}")
        remaining = a - i - 1
        scores = []
        for c in range(b):
            idx = np.empty((n, a), dtype=np.int64)
            idx[:, :i] = chosen
            idx[:, i] = c
            if remaining:
                key = _stream_key(cfg.seed, i, c)
                for r in range(n):
                    idx[r, i + 1 :] = _draw(key, r, remaining, b)
            uniq, inverse = np.unique(idx[:, i:], axis=0, return_inverse=True)
            full = np.empty((len(uniq), a), dtype=np.int64)
            full[:, :i] = chosen
            full[:, i:] = uniq
            res = run_batch(L[full], tables, cfg.dt, rate=rates[full], init=state,
                            record_splits=False, jobs=cfg.jobs)
            simulated += len(uniq)
            t_uniq = np.where(res.status == _kernel.FINISHED, res.finish, np.inf)
            scores.append(_kth(t_uniq[inverse.reshape(-1)], k))
        stats.append([(float(L[c]), scores[c]) for c in range(b)])
        best = int(np.argmin(scores))  # first minimum: lowest wattage on ties
        if not math.isfinite(scores[best]):
            raise InfeasibleCourseError(f"every rollout failed to finish at segment {i}")
        chosen.append(best)

    strategy = PowerStrategy(L[chosen])
    predicted = simulate(strategy, grid, weather, rider, env, cfg.dt, tables=tables)
    return OptimizationResult(strategy, predicted, a * b * n, stats, cfg, levels, simulated)


def exhaustive(
    grid: TrackGrid,
    rider: RiderProfile,
    weather: Weather,
    env: EnvParams,
    levels: PowerLevels,
    dt: float = DEFAULT_DT,
    jobs: int = 1,
) -> PowerStrategy:
    """True argmin over every strategy; ties go to the lexicographically lowest."""
    a, b = grid.n_segments, len(levels)
    if b**a > EXHAUSTIVE_CAP:
        raise SearchSpaceTooLarge(f"{b}^{a} strategies exceeds the cap of {EXHAUSTIVE_CAP}")
    levels.validate(rider)
    tables = CourseTables.build(grid, weather, rider, env)
    L = np.asarray(levels.levels)
    idx = np.array(list(itertools.product(range(b), repeat=a)), dtype=np.int64).reshape(-1, a)
    rates = np.atleast_1d(energy_rate(L, rider))
    times = np.empty(len(idx))
    for lo in range(0, len(idx), 100_000):
        chunk = idx[lo : lo + 100_000]
        res = run_batch(L[chunk], tables, dt, rate=rates[chunk], record_splits=False, jobs=jobs)
        times[lo : lo + len(chunk)] = np.where(res.status == _kernel.FINISHED, res.finish, np.inf)
    best = int(np.argmin(times))
    if not math.isfinite(times[best]):
        raise InfeasibleCourseError("no strategy finishes the course")
    return PowerStrategy(L[idx[best]])


def convergence_probe(
    grid: TrackGrid,
    rider: RiderProfile,
    weather: Weather,
    env: EnvParams,
    levels: PowerLevels,
    n_values: Sequence[int],
    seed: int,
    dt: float = DEFAULT_DT,
    jobs: int = 1,
) -> list[tuple[int, float]]:
    if not n_values:
        raise InputError("n_values must be non-empty")
    out = []
    for n in n_values:
        res = optimize(grid, rider, weather, env, levels, TemceConfig(n=n, seed=seed, dt=dt, jobs=jobs))
        out.append((n, res.predicted.finish_time))
    return out
