import math

import numpy as np
import pytest

from cyclepace import fixtures as F
from cyclepace.dynamics import PowerStrategy, Weather, simulate
from cyclepace.errors import InputError
from cyclepace.optimizer import TemceConfig, optimize
from cyclepace.scenarios import (
    DeviationConfig,
    deviation_splits,
    fixed,
    perturbed_powers,
    rain_cross_table,
    snap_to_bounds,
    uniform,
    wind_sweep,
)
from cyclepace.track import build_grid

EAST_5 = Weather(5.0, math.pi / 2)


@pytest.fixture(scope="module")
def rolling_strategy(rider, env, rolling_grid, tokyo_levels):
    return optimize(rolling_grid, rider, Weather(), env, tokyo_levels, TemceConfig(n=50, seed=0)).strategy


# --- wind ------------------------------------------------------------------


def test_zero_wind_sweep_equals_calm(rider, env, rolling_grid, rolling_strategy):
    res = wind_sweep(rolling_strategy, rolling_grid, rider, env, speeds=fixed(0.0), trials=1, seed=3)
    assert res.entries[0][2] == simulate(rolling_strategy, rolling_grid, Weather(), rider, env).finish_time


def test_pinned_wind_reproduces_nominal(rider, env, rolling_grid, tokyo_levels):
    opt = optimize(rolling_grid, rider, EAST_5, env, tokyo_levels, TemceConfig(n=30, seed=1))
    res = wind_sweep(opt.strategy, rolling_grid, rider, env, speeds=fixed(EAST_5.wind_speed),
                     headings=fixed(EAST_5.wind_heading), trials=3)
    assert all(e[2] == opt.predicted.finish_time for e in res.entries)


def test_tailwind_on_straight_is_faster(rider, env):
    grid = build_grid(F.straight_course(2_000.0, heading_deg=40.0))
    s = PowerStrategy([380.0])
    calm = simulate(s, grid, Weather(), rider, env).finish_time
    # rider heading 40°; the wind blowing toward 40° pushes from behind
    res = wind_sweep(s, grid, rider, env, speeds=fixed(10.0), headings=fixed(math.radians(40.0)), trials=1)
    assert res.entries[0][2] <= calm


def test_sweep_deterministic_and_seeded(rider, env, rolling_grid, rolling_strategy):
    a = wind_sweep(rolling_strategy, rolling_grid, rider, env, trials=20, seed=5)
    b = wind_sweep(rolling_strategy, rolling_grid, rider, env, trials=20, seed=5)
    c = wind_sweep(rolling_strategy, rolling_grid, rider, env, trials=20, seed=6)
    assert a.entries == b.entries and a.entries != c.entries
    sp, hd, _ = a.arrays()
    assert np.all((sp >= 0) & (sp <= 10)) and np.all((hd >= 0) & (hd < 2 * math.pi))
    # trial i's draw does not depend on how many trials run
    assert wind_sweep(rolling_strategy, rolling_grid, rider, env, trials=5, seed=5).entries == a.entries[:5]


def test_sweep_rejects_no_trials(rider, env, rolling_grid, rolling_strategy):
    with pytest.raises(InputError):
        wind_sweep(rolling_strategy, rolling_grid, rider, env, trials=0)


@pytest.mark.slow
def test_tokyo_sweep_10k_qualitative(rider, env, tokyo_grid, tokyo_levels):
    opt = optimize(tokyo_grid, rider, EAST_5, env, tokyo_levels, TemceConfig(n=100, seed=0))
    res = wind_sweep(opt.strategy, tokyo_grid, rider, env, uniform(0.0, 10.0), uniform(0.0, 2 * math.pi),
                     trials=10_000, seed=0)
    sp, hd, t = res.arrays()
    assert len(t) == 10_000 and res.dnf_count == 0
    dist = np.hypot(sp * np.sin(hd) - 5.0, sp * np.cos(hd))
    # smooth response around the optimized wind vector, and the best times gather near it
    assert np.all(np.abs(t[dist < 1.0] / opt.predicted.finish_time - 1) < 0.015)
    assert np.median(t[dist < 2.0]) < np.median(t)


# --- rain ------------------------------------------------------------------


def test_rain_never_faster_on_flat(rider, env):
    grid = build_grid(F.straight_course(1_000.0))
    for p in (250.0, 400.0, 700.0):
        dry = simulate(PowerStrategy([p]), grid, Weather(), rider, env).finish_time
        wet = simulate(PowerStrategy([p]), grid, Weather(rain=True), rider, env).finish_time
        assert wet >= dry


def test_cross_table_shape_and_diagonal(rider, env, rolling_grid, tokyo_levels):
    cfg = TemceConfig(n=30, seed=2)
    table = rain_cross_table(rolling_grid, rider, env, tokyo_levels, cfg)
    assert table.conditions == ("no_rain", "rain") and table.times.shape == (2, 2)
    for i, cond in enumerate(table.conditions):
        w = Weather(rain=cond == "rain")
        opt = optimize(rolling_grid, rider, w, env, tokyo_levels, cfg)
        assert table.strategies[cond] == opt.strategy
        assert table.times[i, i] == opt.predicted.finish_time
    doc = table.to_json()
    assert [r["optimized_for"] for r in doc["rows"]] == ["no_rain", "rain"]
    assert set(doc["rows"][0]) == {"optimized_for", "sim_no_rain_s", "sim_rain_s"}


# --- deviations ------------------------------------------------------------


def test_zero_sigma_is_degenerate(rider, env, rolling_grid, rolling_strategy):
    nominal = None
    for seed in (0, 1):
        cfg = DeviationConfig((900.0, 5_000.0), sigma_fraction=0.0, trials=20, seed=seed)
        res = deviation_splits(rolling_strategy, rolling_grid, rider, Weather(), env, cfg)
        assert np.all(res.splits == res.nominal_split)
        nominal = nominal or res.nominal_split
        assert res.nominal_split == nominal
    out = simulate(rolling_strategy, rolling_grid, Weather(), rider, env)
    t_at = dict(out.splits)
    assert res.nominal_split == pytest.approx(t_at[res.s_end] - t_at[res.s_start])


def test_snapping_to_segment_bounds(rolling_grid):
    b = rolling_grid.segment_bounds
    assert snap_to_bounds(rolling_grid, b[1] + 20.0, b[3] - 20.0) == (1, 3)
    assert snap_to_bounds(rolling_grid, 0.0, 10.0) == (0, 1)
    assert snap_to_bounds(rolling_grid, b[-1] - 5.0, b[-1]) == (len(b) - 2, len(b) - 1)
    with pytest.raises(InputError):
        snap_to_bounds(rolling_grid, 0.0, b[-1] + 100.0)


def test_perturbation_floor_and_cap(rider):
    s = PowerStrategy([0.0, 500.0, 0.97 * rider.curve.p_max])
    p = perturbed_powers(s, rider, DeviationConfig((0.0, 1.0), sigma_fraction=0.5, trials=500, seed=1))
    assert np.all(p[:, 0] == 0.0)
    assert p.min() >= 0.0 and p.max() <= 0.99 * rider.curve.p_max
    assert p[:, 1].std() == pytest.approx(250.0, rel=0.15)


def test_perturbation_keyed_per_trial(rider):
    s = PowerStrategy([400.0, 500.0])
    a = perturbed_powers(s, rider, DeviationConfig((0.0, 1.0), trials=10, seed=4))
    b = perturbed_powers(s, rider, DeviationConfig((0.0, 1.0), trials=4, seed=4))
    np.testing.assert_array_equal(a[:4], b)


def test_deviation_config_validation():
    for kwargs in ({"sigma_fraction": -0.1}, {"trials": 0}, {"split_range": (10.0, 5.0)}):
        args = {"split_range": (0.0, 100.0), **kwargs}
        with pytest.raises(InputError):
            DeviationConfig(**args)


def test_dnf_trials_excluded_and_counted(rider, env):
    # 60 W up an 8% grade with sigma equal to the nominal: low draws stall and time out
    grid = build_grid(F.straight_course(3_000.0, grade=0.08))
    grid = grid.with_segments([0.0, 1_000.0, 2_000.0, grid.total_length])
    s = PowerStrategy([60.0, 60.0, 60.0])
    cfg = DeviationConfig((0.0, grid.total_length), sigma_fraction=1.0, trials=200, seed=0)
    res = deviation_splits(s, grid, rider, Weather(), env, cfg)
    assert res.dnf_count > 0
    assert len(res.splits) + res.dnf_count == 200
    assert np.all(np.isfinite(res.splits))
    summary = res.summary()
    assert set(summary) == {"nominal_split_s", "mean_s", "p95_s", "dnf_count"}


def test_deviation_jobs_invariant(rider, env, rolling_grid, rolling_strategy):
    cfg = DeviationConfig((900.0, 5_000.0), trials=64, seed=3)
    a = deviation_splits(rolling_strategy, rolling_grid, rider, Weather(), env, cfg)
    b = deviation_splits(rolling_strategy, rolling_grid, rider, Weather(), env, cfg, jobs=4)
    np.testing.assert_array_equal(a.splits, b.splits)
