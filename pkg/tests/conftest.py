import functools

import numpy as np
import pytest

from cyclepace import fixtures as F
from cyclepace.dynamics import EnvParams, Weather
from cyclepace.optimizer import PowerLevels, TemceConfig, optimize
from cyclepace.power import RiderProfile
from cyclepace.track import build_grid

# (criterion number, passed, detail) rows filled in by test_acceptance.py
ACCEPTANCE_LINES: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def env():
    return EnvParams()


@pytest.fixture(scope="session")
def rider():
    return F.tt_specialist()


@pytest.fixture(scope="session")
def simple_rider():
    """Rider carrying the generating curve directly (no fit in the loop)."""
    return RiderProfile("simple", 82.0, 0.4, 0.6, F.TT_TRUE_CURVE)


@pytest.fixture(scope="session")
def tokyo_grid():
    return F.tokyo_like_grid()


@pytest.fixture(scope="session")
def tokyo_levels(rider):
    return PowerLevels.default(rider)


@pytest.fixture(scope="session")
def flat3x3():
    """600 m flat straight split into three 200 m segments."""
    grid = build_grid(F.straight_course(600.0))
    return grid.with_segments([0.0, 200.0, 400.0, grid.total_length])


@pytest.fixture(scope="session")
def levels3x3():
    return PowerLevels([400.0, 700.0, 1000.0])


@pytest.fixture(scope="session")
def rolling_grid():
    """8 km two-hill course, small enough for repeated optimization."""
    hills = ((1_000.0, 2_200.0, 3_200.0, 60.0), (4_500.0, 5_800.0, 7_000.0, 90.0))
    xy = F.path_xy([("s", 2_000.0), ("a", 30.0, 90.0), ("s", 3_000.0)], total=8_000.0)
    s = np.concatenate(([0.0], np.cumsum(np.hypot(*np.diff(xy, axis=0).T))))
    return F.segmented_grid(F.points_from_xy(xy, F.hill_profile(s, hills, 100.0), 45.0, 7.0))


@pytest.fixture(scope="session")
def tokyo_opt(tokyo_grid, rider, env, tokyo_levels):
    """Memoized Tokyo-fixture optimizations keyed by (n, seed, rain)."""

    @functools.lru_cache(maxsize=None)
    def run(n: int, seed: int, rain: bool = False):
        return optimize(tokyo_grid, rider, Weather(rain=rain), env, tokyo_levels, TemceConfig(n=n, seed=seed))

    return run
