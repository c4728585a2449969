"""Command-line interface: ``cyclepace {ingest,fit,optimize,simulate,sensitivity,splits}``.

Exit codes: 0 success, 1 infeasible or did-not-finish result, 2 input error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from .dynamics import EnvParams, PowerStrategy, Weather, simulate
from .errors import InfeasibleCourseError, InputError, NumericalError
from .optimizer import PowerLevels, TemceConfig, exhaustive, optimize
from .power import RiderProfile, OmniPDParams, curve_table, fit_omni_pd, load_mmp
from .records import meta_block, write_csv, write_json
from .scenarios import DeviationConfig, deviation_splits, rain_cross_table, uniform, wind_sweep
from .track import DEFAULT_MIN_SEGMENT, DEFAULT_SPACING, TrackGrid, load_track, segment_ids

EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2, 3


class DidNotFinish(Exception):
    """Raised after outputs are written when the result is a DNF."""


def _read(path: str | Path) -> bytes:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {p}")
    return p.read_bytes()


# ---------------------------------------------------------------------------
# manifest


@dataclass
class RunManifest:
    course: Path
    rider: Path
    output_dir: Path
    seed: int = 0
    weather: Weather = field(default_factory=Weather)
    env: EnvParams = field(default_factory=EnvParams)
    n: int = 1000
    k: int | None = None
    dt: float = 0.1
    levels_w: tuple | None = None
    n_levels: int = 8
    spacing: float = DEFAULT_SPACING
    min_segment_length: float = DEFAULT_MIN_SEGMENT
    bank: Path | None = None
    source: Path | None = None

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        path = Path(path)
        try:
            data = tomli.loads(_read(path).decode())
        except tomli.TOMLDecodeError as exc:
            raise InputError(f"{path}: {exc}") from None
        base = path.parent

        def rel(key, table=data):
            return (base / table[key]) if key in table else None

        for key in ("course", "rider"):
            if key not in data:
                raise InputError(f"{path}: manifest needs '{key}'")
        w = data.get("weather", {})
        opt = data.get("optimizer", {})
        trk = data.get("track", {})
        try:
            weather = Weather(float(w.get("wind_speed", 0.0)), math.radians(float(w.get("wind_heading_deg", 0.0))),
                              bool(w.get("rain", False)))
            env = EnvParams(**{k: float(v) for k, v in data.get("env", {}).items()})
        except TypeError as exc:
            raise InputError(f"{path}: {exc}") from None
        levels = opt.get("levels_w")
        return cls(
            course=rel("course"),
            rider=rel("rider"),
            output_dir=rel("output_dir") or base / "out",
            seed=int(data.get("seed", 0)),
            weather=weather,
            env=env,
            n=int(opt.get("n", 1000)),
            k=opt.get("k"),
            dt=float(opt.get("dt", 0.1)),
            levels_w=tuple(levels) if levels is not None else None,
            n_levels=int(opt.get("n_levels", 8)),
            spacing=float(trk.get("spacing", DEFAULT_SPACING)),
            min_segment_length=float(trk.get("min_segment_length", DEFAULT_MIN_SEGMENT)),
            bank=rel("bank", trk),
            source=path,
        )

    def override(self, args: argparse.Namespace) -> "RunManifest":
        m = self
        if getattr(args, "out", None):
            m = replace(m, output_dir=Path(args.out))
        for name in ("seed", "n", "k", "dt"):
            if getattr(args, name, None) is not None:
                m = replace(m, **{name: getattr(args, name)})
        if getattr(args, "levels", None):
            m = replace(m, levels_w=tuple(float(v) for v in args.levels.split(",")))
        w = m.weather
        if args.wind_speed is not None:
            w = replace(w, wind_speed=args.wind_speed)
        if args.wind_heading_deg is not None:
            w = replace(w, wind_heading=math.radians(args.wind_heading_deg) % (2 * math.pi))
        if args.rain is not None:
            w = replace(w, rain=args.rain)
        return replace(m, weather=w)

    def inputs(self) -> dict:
        out = {"course": self.course, "rider": self.rider}
        if self.source is not None:
            out["manifest"] = self.source
        if self.bank is not None:
            out["bank"] = self.bank
        return out


@dataclass
class Setup:
    manifest: RunManifest
    grid: TrackGrid
    rider: RiderProfile
    levels: PowerLevels
    inputs: dict


def load_rider(path: Path) -> tuple[RiderProfile, dict]:
    """Rider JSON holding mass/area/drag plus either a fitted ``curve`` or an ``mmp`` CSV path."""
    try:
        d = json.loads(_read(path))
        extra = {}
        if "curve" in d:
            curve = OmniPDParams.from_json(d["curve"])
        elif "mmp" in d:
            mmp = path.parent / d["mmp"]
            curve = fit_omni_pd(load_mmp(_read(mmp))).params
            extra["mmp"] = mmp
        else:
            raise InputError(f"{path}: rider needs 'curve' or 'mmp'")
        rider = RiderProfile(str(d.get("name", path.stem)), float(d["mass_kg"]), float(d["frontal_area_m2"]),
                             float(d["drag_coeff"]), curve)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: {exc}") from None
    except KeyError as exc:
        raise InputError(f"{path}: rider missing {exc.args[0]!r}") from None
    return rider, extra


def setup(args) -> Setup:
    m = RunManifest.load(args.manifest).override(args)
    bank = _read(m.bank) if m.bank else None
    grid = load_track(_read(m.course), m.spacing, m.min_segment_length, bank)
    rider, extra = load_rider(m.rider)
    levels = PowerLevels(m.levels_w) if m.levels_w else PowerLevels.default(rider, m.n_levels)
    levels.validate(rider)
    return Setup(m, grid, rider, levels, {**m.inputs(), **extra})


def load_strategy(path: str | Path) -> PowerStrategy:
    try:
        d = json.loads(_read(path))
        return PowerStrategy([s["power_w"] for s in d["segments"]])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: not a strategy file ({exc})") from None


# ---------------------------------------------------------------------------
# output helpers


def _trajectory_rows(traj: np.ndarray, dt: float, interval: float | None):
    stride = max(1, int(round(interval / dt))) if interval else 1
    keep = np.arange(0, len(traj), stride)
    if len(traj) and keep[-1] != len(traj) - 1:
        keep = np.append(keep, len(traj) - 1)
    return traj[keep]


def _write_trajectory(path, outcome, dt, interval):
    write_csv(path, ["t_s", "x_h_m", "v_mps", "energy", "power_w"],
              _trajectory_rows(outcome.trajectory, dt, interval).tolist())


def _write_splits(path, outcome):
    write_csv(path, ["segment_id", "s_m", "t_s"], [(i, s, t) for i, (s, t) in enumerate(outcome.splits)])


def _strategy_json(grid, strategy, outcome, config: dict, meta: dict) -> dict:
    b = grid.segment_bounds
    split_t = {s: t for s, t in outcome.splits}
    return {
        "segments": [
            {"start_m": b[i], "end_m": b[i + 1], "power_w": p, "split_s": split_t.get(b[i + 1], math.nan)}
            for i, p in enumerate(strategy.levels)
        ],
        "finish_time_s": outcome.finish_time,
        "status": outcome.status.value,
        "config": config,
        "meta": meta,
    }


def _echo(msg: str) -> None:
    print(msg, flush=True)


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(args) -> int:
    gpx = Path(args.gpx)
    bank = _read(args.bank) if args.bank else None
    grid = load_track(_read(gpx), args.spacing, args.min_segment_length, bank)
    out = Path(args.out)
    seg = segment_ids(grid)
    write_csv(out / "track.csv", ["s_m", "ele_m", "slope_rad", "radius_m", "heading_rad", "segment_id"],
              zip(grid.s.tolist(), grid.ele.tolist(), grid.theta.tolist(), grid.radius.tolist(),
                  grid.heading.tolist(), seg.tolist()))
    inputs = {"course": gpx, **({"bank": args.bank} if args.bank else {})}
    summary = {
        "total_length_m": grid.total_length,
        "n_samples": len(grid),
        "n_segments": grid.n_segments,
        "total_climb_m": grid.total_climb,
        "segment_bounds_m": list(grid.segment_bounds),
        "meta": meta_block(None, inputs),
    }
    write_json(out / "track_summary.json", summary)
    _echo(f"{grid.total_length:.1f} m, {grid.n_segments} segments, {grid.total_climb:.1f} m climb")
    return EXIT_OK


def cmd_fit(args) -> int:
    mmp = Path(args.mmp)
    res = fit_omni_pd(load_mmp(_read(mmp)))
    out = Path(args.out)
    doc = res.params.to_json(args.name or mmp.stem, res.rms)
    doc["meta"] = meta_block(None, {"mmp": mmp})
    write_json(out / "params.json", doc)
    t, p = curve_table(res.params)
    write_csv(out / "curve.csv", ["duration_s", "power_w"], zip(t.tolist(), p.tolist()))
    _echo(f"P_C {res.params.p_c:.1f} W, W' {res.params.w_prime:.0f} J, rms {res.rms:.3g} W")
    return EXIT_OK


def cmd_optimize(args) -> int:
    s = setup(args)
    m = s.manifest
    config = {"n": None, "k": None, "seed": m.seed, "dt": m.dt, "levels_w": list(s.levels.levels)}
    if args.exhaustive:
        strategy = exhaustive(s.grid, s.rider, m.weather, m.env, s.levels, m.dt, args.jobs)
        config["mode"] = "exhaustive"
        trace = None
    else:
        cfg = TemceConfig(n=m.n, k=m.k, seed=m.seed, dt=m.dt, jobs=args.jobs)
        res = optimize(s.grid, s.rider, m.weather, m.env, s.levels, cfg)
        strategy = res.strategy
        config.update(n=cfg.n, k=cfg.k, mode="temce")
        trace = [
            (i, cand, kth, int(cand == res.chosen(i)))
            for i, seg in enumerate(res.per_segment_stats)
            for cand, kth in seg
        ]
    outcome = simulate(strategy, s.grid, m.weather, s.rider, m.env, m.dt, record_trajectory=True)
    out = m.output_dir
    write_json(out / "strategy.json", _strategy_json(s.grid, strategy, outcome, config, meta_block(m.seed, s.inputs)))
    if trace is not None:
        write_csv(out / "decision_trace.csv", ["segment_id", "candidate_w", "kth_time_s", "chosen"], trace)
    _write_trajectory(out / "trajectory.csv", outcome, m.dt, args.sample_interval)
    _echo(f"finish {outcome.finish_time:.1f} s ({outcome.status.value})")
    if not outcome.finished:
        raise DidNotFinish
    return EXIT_OK


def _simulate_strategy(args):
    s = setup(args)
    strategy = load_strategy(args.strategy)
    outcome = simulate(strategy, s.grid, s.manifest.weather, s.rider, s.manifest.env, s.manifest.dt,
                       record_trajectory=True)
    return s, strategy, outcome, {**s.inputs, "strategy": Path(args.strategy)}


def cmd_simulate(args) -> int:
    s, strategy, outcome, inputs = _simulate_strategy(args)
    m = s.manifest
    doc = {
        "finish_time_s": outcome.finish_time,
        "status": outcome.status.value,
        "splits": [{"s_m": x, "t_s": t} for x, t in outcome.splits],
        "weather": {"wind_speed_mps": m.weather.wind_speed, "wind_heading_rad": m.weather.wind_heading,
                    "rain": m.weather.rain},
        "dt": m.dt,
        "meta": meta_block(m.seed, inputs),
    }
    write_json(m.output_dir / "outcome.json", doc)
    _write_trajectory(m.output_dir / "trajectory.csv", outcome, m.dt, args.sample_interval)
    _echo(f"finish {outcome.finish_time:.3f} s ({outcome.status.value})")
    if not outcome.finished:
        raise DidNotFinish
    return EXIT_OK


def cmd_splits(args) -> int:
    s, strategy, outcome, _ = _simulate_strategy(args)
    _write_splits(s.manifest.output_dir / "splits.csv", outcome)
    _echo(f"{len(outcome.splits)} splits, finish {outcome.finish_time:.3f} s")
    if not outcome.finished:
        raise DidNotFinish
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    s = setup(args)
    m = s.manifest
    out = m.output_dir
    inputs = dict(s.inputs)
    if args.mode in ("wind", "deviation"):
        if not args.strategy:
            raise InputError(f"sensitivity {args.mode} needs --strategy")
        strategy = load_strategy(args.strategy)
        inputs["strategy"] = Path(args.strategy)

    if args.mode == "wind":
        trials = args.trials if args.trials is not None else 10_000
        res = wind_sweep(
            strategy, s.grid, s.rider, m.env,
            speeds=uniform(args.speed_min, args.speed_max),
            headings=uniform(math.radians(args.heading_min_deg), math.radians(args.heading_max_deg)),
            trials=trials, seed=m.seed, rain=m.weather.rain, dt=m.dt,
        )
        write_csv(out / "wind_sweep.csv", ["wind_speed_mps", "wind_heading_rad", "finish_time_s", "status"],
                  [(ws, wh, t, st.value) for ws, wh, t, st in res.entries])
        write_json(out / "wind_sweep.json", {"trials": trials, "dnf_count": res.dnf_count,
                                             "meta": meta_block(m.seed, inputs)})
        _echo(f"{trials} wind trials, {res.dnf_count} DNF")
    elif args.mode == "rain":
        cfg = TemceConfig(n=m.n, k=m.k, seed=m.seed, dt=m.dt, jobs=args.jobs)
        table = rain_cross_table(s.grid, s.rider, m.env, s.levels, cfg, wind=replace(m.weather, rain=False))
        write_json(out / "rain_table.json", {**table.to_json(), "config": cfg.to_json(),
                                             "meta": meta_block(m.seed, inputs)})
        _echo("rain table: " + ", ".join(f"{t:.1f}" for t in table.times.ravel()))
    else:
        if args.split_start is None or args.split_end is None:
            raise InputError("sensitivity deviation needs --split-start and --split-end")
        trials = args.trials if args.trials is not None else 1000
        cfg = DeviationConfig((args.split_start, args.split_end), args.sigma_fraction, trials, m.seed)
        res = deviation_splits(strategy, s.grid, s.rider, m.weather, m.env, cfg, m.dt, args.jobs)
        write_csv(out / "split_hist.csv", ["trial", "split_time_s"], zip(res.trial_ids.tolist(), res.splits.tolist()))
        summary = {**res.summary(), "s_start_m": res.s_start, "s_end_m": res.s_end,
                   "sigma_fraction": cfg.sigma_fraction, "trials": trials, "meta": meta_block(m.seed, inputs)}
        write_json(out / "split_summary.json", summary)
        _echo(f"nominal split {res.nominal_split:.2f} s, {res.dnf_count} DNF")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _bool_flag(p, name, help):
    p.add_argument(f"--{name}", dest=name.replace("-", "_"), action="store_true", default=None, help=help)
    p.add_argument(f"--no-{name}", dest=name.replace("-", "_"), action="store_false")


def _run_options(p, strategy=False):
    p.add_argument("--manifest", required=True, help="TOML run manifest")
    if strategy:
        p.add_argument("--strategy", help="strategy JSON written by 'optimize'")
    p.add_argument("--out", help="output directory (overrides manifest)")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int, help="rollouts per candidate")
    p.add_argument("--k", type=int, help="rank of the rollout time used as the score")
    p.add_argument("--dt", type=float, help="integration step (s)")
    p.add_argument("--levels", help="comma-separated power levels (W)")
    p.add_argument("--wind-speed", type=float, help="m/s")
    p.add_argument("--wind-heading-deg", type=float, help="direction the wind blows toward, degrees from north")
    _bool_flag(p, "rain", "wet road")
    p.add_argument("--jobs", type=int, default=1, help="worker threads (never changes results)")
    p.add_argument("--sample-interval", type=float, help="trajectory CSV sample interval (s)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cyclepace", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"cyclepace {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="resample and segment a GPX course")
    p.add_argument("gpx")
    p.add_argument("--spacing", type=float, default=DEFAULT_SPACING)
    p.add_argument("--min-segment-length", type=float, default=DEFAULT_MIN_SEGMENT)
    p.add_argument("--bank", help="bank-angle CSV (s_m,bank_rad)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", help="fit an Omni-PD curve to MMP data")
    p.add_argument("mmp")
    p.add_argument("--name")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("optimize", help="optimize a pacing strategy")
    _run_options(p)
    p.add_argument("--exhaustive", action="store_true", help="enumerate every strategy (small instances)")
    p.set_defaults(func=cmd_optimize)

    for name, func, help in (("simulate", cmd_simulate, "simulate a strategy"),
                             ("splits", cmd_splits, "dump per-segment split times")):
        p = sub.add_parser(name, help=help)
        p.add_argument("strategy", help="strategy JSON")
        _run_options(p)
        p.set_defaults(func=func)

    p = sub.add_parser("sensitivity", help="wind, rain or execution-deviation studies")
    p.add_argument("mode", choices=("wind", "rain", "deviation"))
    _run_options(p, strategy=True)
    p.add_argument("--trials", type=int)
    p.add_argument("--speed-min", type=float, default=0.0)
    p.add_argument("--speed-max", type=float, default=10.0)
    p.add_argument("--heading-min-deg", type=float, default=0.0)
    p.add_argument("--heading-max-deg", type=float, default=360.0)
    p.add_argument("--sigma-fraction", type=float, default=1.0 / 50.0)
    p.add_argument("--split-start", type=float)
    p.add_argument("--split-end", type=float)
    p.set_defaults(func=cmd_sensitivity)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DidNotFinish:
        return EXIT_INFEASIBLE
    except InfeasibleCourseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
