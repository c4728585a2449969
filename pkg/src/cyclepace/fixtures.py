"""Synthetic courses and riders for tests, demos and the acceptance suite.

Courses are built in a local east/north plane as sequences of straights and
circular arcs, sampled every ``ds`` metres, then mapped back to lat/lon with
the inverse of the tangent-plane projection used by :mod:`cyclepace.track`.

Run ``python -m cyclepace.fixtures OUTDIR`` to write the demo inputs.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np

from .power import MMPoint, OmniPDParams, RiderProfile, dump_mmp, fit_omni_pd, omni_pd_power
from .track import GeoPoint, TrackGrid, build_grid, from_local_xy, segment_track, write_gpx

TT_TRUE_CURVE = OmniPDParams(p_max=1100.0, p_c=400.0, w_prime=25_000.0, t_cpmax=1800.0, beta=30.0)
MMP_DURATIONS = (1, 3, 5, 10, 20, 30, 60, 120, 180, 300, 600, 900, 1200, 1800, 2400, 3600, 5400, 7200)

# (start_m, peak_m, end_m, height_m); heights sum to the course's total climb
TOKYO_HILLS = (
    (1_500.0, 4_000.0, 6_500.0, 160.0),
    (9_000.0, 11_500.0, 14_500.0, 140.0),
    (17_000.0, 19_500.0, 22_500.0, 180.0),
    (26_000.0, 32_000.0, 36_500.0, 366.0),
)
TOKYO_LENGTH = 44_200.0
TOKYO_ORIGIN = (35.37, 138.93)

# legs: ("s", length) or ("a", radius, turn_deg); positive turns are to the right
TOKYO_LEGS = (
    ("s", 1_200.0), ("a", 400.0, 30.0), ("s", 2_600.0), ("a", 25.0, 90.0), ("s", 1_900.0),
    ("a", 600.0, -45.0), ("s", 1_500.0), ("a", 30.0, -90.0), ("s", 2_300.0), ("a", 300.0, 40.0),
    ("s", 2_800.0), ("a", 20.0, 100.0), ("s", 1_600.0), ("a", 800.0, -30.0), ("s", 2_400.0),
    ("a", 35.0, 90.0), ("s", 3_000.0), ("a", 500.0, -60.0), ("s", 2_000.0), ("a", 22.0, -120.0),
    ("s", 2_700.0), ("a", 250.0, 50.0), ("s", 2_200.0), ("a", 40.0, 90.0), ("s", 1_800.0),
    ("a", 20.0, -90.0), ("s", 2_500.0), ("a", 700.0, 35.0), ("s", 1_700.0), ("a", 30.0, 100.0),
)


def path_xy(legs, ds: float = 10.0, total: float | None = None, heading_deg: float = 0.0) -> np.ndarray:
    """Sample a straight/arc path every ``ds`` metres; the last straight is padded to ``total``."""
    legs = list(legs)
    if total is not None:
        used = sum(l[1] if l[0] == "s" else l[1] * math.radians(abs(l[2])) for l in legs)
        if used > total:
            raise ValueError("legs longer than requested total")
        legs.append(("s", total - used))
    pos = np.zeros(2)
    hdg = math.radians(heading_deg)
    out = [pos.copy()]
    carry = 0.0  # arc length already travelled past the last sample
    for leg in legs:
        if leg[0] == "s":
            length, curv = leg[1], 0.0
        else:
            length = leg[1] * math.radians(abs(leg[2]))
            curv = math.copysign(1.0 / leg[1], leg[2])
        s = ds - carry
        start_pos, start_hdg = pos.copy(), hdg
        while s <= length + 1e-9:
            out.append(_advance_on(start_pos, start_hdg, curv, s))
            s += ds
        pos = _advance_on(start_pos, start_hdg, curv, length)
        hdg = start_hdg + curv * length
        carry = length - (s - ds)
    if carry > 1e-6:
        out.append(pos.copy())
    return np.array(out)


def _advance_on(pos, hdg, curv, s):
    # heading is clockwise from north: unit direction (sin h, cos h) in (east, north)
    if curv == 0.0:
        return pos + s * np.array([math.sin(hdg), math.cos(hdg)])
    r = 1.0 / curv
    h1 = hdg + curv * s
    return pos + r * np.array([math.cos(hdg) - math.cos(h1), math.sin(h1) - math.sin(hdg)])


def hill_profile(s, hills, base: float = 0.0) -> np.ndarray:
    """Raised-cosine climbs and descents between (start, peak, end) positions."""
    s = np.asarray(s, dtype=float)
    ele = np.full(s.shape, base)
    for a, p, b, h in hills:
        up = (s >= a) & (s < p)
        down = (s >= p) & (s <= b)
        ele[up] += h * 0.5 * (1 - np.cos(np.pi * (s[up] - a) / (p - a)))
        ele[down] += h * 0.5 * (1 + np.cos(np.pi * (s[down] - p) / (b - p)))
    return ele


def points_from_xy(xy, ele, lat0: float = 0.0, lon0: float = 0.0) -> list[GeoPoint]:
    lat, lon = from_local_xy(xy, lat0, lon0)
    return [GeoPoint(float(a), float(o), float(e)) for a, o, e in zip(lat, lon, ele)]


def _arc_lengths(xy):
    return np.concatenate(([0.0], np.cumsum(np.hypot(*np.diff(xy, axis=0).T))))


def straight_course(length: float, grade: float = 0.0, heading_deg: float = 0.0, ds: float = 10.0,
                    lat0: float = 0.0, lon0: float = 0.0, ele0: float = 0.0) -> list[GeoPoint]:
    """Straight course rising ``grade`` metres per horizontal metre."""
    xy = path_xy([("s", length)], ds, heading_deg=heading_deg)
    return points_from_xy(xy, ele0 + grade * _arc_lengths(xy), lat0, lon0)


def sine_hill_course(length: float, height: float, ds: float = 10.0) -> list[GeoPoint]:
    """One full raised-cosine period: crest at L/2, steepest climb/descent at L/4 and 3L/4."""
    xy = path_xy([("s", length)], ds)
    s = _arc_lengths(xy)
    return points_from_xy(xy, height * 0.5 * (1 - np.cos(2 * np.pi * s / length)))


def tokyo_like_course(ds: float = 10.0) -> list[GeoPoint]:
    """44.2 km time-trial course with 846 m of climbing and several tight corners."""
    xy = path_xy(TOKYO_LEGS, ds, total=TOKYO_LENGTH)
    ele = np.round(hill_profile(_arc_lengths(xy), TOKYO_HILLS, base=550.0), 2)
    return points_from_xy(xy, ele, *TOKYO_ORIGIN)


def segmented_grid(points, spacing: float = 10.0, min_segment_length: float = 300.0) -> TrackGrid:
    grid = build_grid(points, spacing)
    return grid.with_segments(segment_track(grid, min_segment_length))


def tokyo_like_grid() -> TrackGrid:
    return segmented_grid(tokyo_like_course())


def synthetic_mmp(curve: OmniPDParams = TT_TRUE_CURVE, durations=MMP_DURATIONS) -> list[MMPoint]:
    return [MMPoint(float(d), float(omni_pd_power(curve, d))) for d in durations]


def tt_specialist(name: str = "synthetic-tt-specialist") -> RiderProfile:
    """82 kg time-trial specialist whose curve is fitted to noiseless synthetic MMP data."""
    fit = fit_omni_pd(synthetic_mmp())
    return RiderProfile(name, mass=82.0, frontal_area=0.4, drag_coeff=0.6, curve=fit.params)


def write_demo_inputs(outdir: str | Path) -> dict:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "tokyo_like.gpx").write_text(write_gpx(tokyo_like_course(), "tokyo-like"))
    (out / "flat600.gpx").write_text(write_gpx(straight_course(600.0), "flat-600"))
    (out / "rider_mmp.csv").write_text(dump_mmp(synthetic_mmp()))
    rider = {
        "name": "synthetic-tt-specialist",
        "mass_kg": 82.0,
        "frontal_area_m2": 0.4,
        "drag_coeff": 0.6,
        "mmp": "rider_mmp.csv",
    }
    (out / "rider.json").write_text(json.dumps(rider, indent=2) + "\n")
    manifest = (
        'course = "tokyo_like.gpx"\n'
        'rider = "rider.json"\n'
        'output_dir = "out"\n'
        "seed = 1\n\n"
        "[weather]\nwind_speed = 0.0\nwind_heading_deg = 0.0\nrain = false\n\n"
        "[optimizer]\nn = 100\ndt = 0.1\n"
    )
    (out / "manifest.toml").write_text(manifest)
    return {p.name: str(p) for p in out.iterdir()}


if __name__ == "__main__":  # pragma: no cover
    for name, path in sorted(write_demo_inputs(sys.argv[1] if len(sys.argv) > 1 else "demo").items()):
        print(path)
