import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cyclepace import fixtures as F
from cyclepace.errors import (
    DegenerateGeometryError,
    GPXParseError,
    GPXSchemaError,
    InputError,
    InsufficientDataError,
)
from cyclepace.track import (
    R_MAX,
    GeoPoint,
    build_grid,
    cumulative_distances,
    curvature_radii,
    fit_circles,
    haversine,
    headings,
    load_bank_csv,
    load_track,
    local_extrema,
    merge_bounds,
    parse_gpx,
    segment_ids,
    segment_track,
    slope_angles,
    to_local_xy,
    write_gpx,
)

lat = st.floats(-89.0, 89.0)
lon = st.floats(-179.0, 179.0)
geo = st.builds(GeoPoint, lat, lon, st.just(0.0))


def gpx(body: str, ns: str = ' xmlns="http://www.topografix.com/GPX/1/1"') -> str:
    return f'<?xml version="1.0"?><gpx version="1.1"{ns}><trk><trkseg>{body}</trkseg></trk></gpx>'


def pt(la, lo, ele=0.0):
    return f'<trkpt lat="{la}" lon="{lo}"><ele>{ele}</ele></trkpt>'


# --- GPX -------------------------------------------------------------------


def test_parse_gpx_reads_points_in_order():
    pts = parse_gpx(gpx(pt(1.0, 2.0, 3.0) + pt(1.5, 2.5, 4.0)))
    assert pts == [GeoPoint(1.0, 2.0, 3.0), GeoPoint(1.5, 2.5, 4.0)]


def test_parse_gpx_without_namespace_and_multiple_segments():
    doc = '<gpx><trk><trkseg>' + pt(0, 0) + '</trkseg><trkseg>' + pt(0, 0.001) + '</trkseg></trk></gpx>'
    assert len(parse_gpx(doc)) == 2


def test_gpx_round_trip():
    points = F.straight_course(200.0, grade=0.02, lat0=35.0, lon0=139.0)
    back = parse_gpx(write_gpx(points))
    assert len(back) == len(points)
    assert max(abs(a.lat - b.lat) for a, b in zip(points, back)) < 1e-8
    assert max(abs(a.ele - b.ele) for a, b in zip(points, back)) <= 0.005


@pytest.mark.parametrize(
    "doc, err",
    [
        ("<gpx><trk>", GPXParseError),
        ("<kml/>", GPXParseError),
        (gpx('<trkpt lon="1"><ele>0</ele></trkpt>' + pt(0, 0)), GPXSchemaError),
        (gpx('<trkpt lat="0" lon="0"></trkpt>' + pt(0, 0)), GPXSchemaError),
        (gpx('<trkpt lat="0" lon="0"><ele>high</ele></trkpt>' + pt(0, 0)), GPXSchemaError),
        (gpx(pt(95, 0) + pt(0, 0)), GPXSchemaError),
        (gpx(pt(0, 0)), InsufficientDataError),
    ],
)
def test_parse_gpx_errors(doc, err):
    with pytest.raises(err):
        parse_gpx(doc)


def test_input_errors_are_value_errors():
    with pytest.raises(ValueError):
        parse_gpx("<gpx/>")


# --- geodesy ---------------------------------------------------------------


def test_haversine_coincident_is_zero():
    p = GeoPoint(35.0, 139.0, 0.0)
    assert haversine(p, p) == 0.0


def test_haversine_equatorial_degree():
    # oracle: arc length of one degree on the R = 6,371,000 m sphere
    d = haversine(GeoPoint(0, 0, 0), GeoPoint(0, 1, 0))
    assert d == pytest.approx(2 * math.pi * 6_371_000 / 360, abs=1e-6)
    assert abs(d - 111_195) <= 1


@settings(max_examples=100)
@given(geo, geo)
def test_haversine_symmetric_nonnegative(p, q):
    assert haversine(p, q) == pytest.approx(haversine(q, p), rel=1e-12, abs=1e-9)
    assert haversine(p, q) >= 0.0


@settings(max_examples=100)
@given(geo, geo, geo)
def test_haversine_triangle_inequality(p, q, r):
    assert haversine(p, r) <= (haversine(p, q) + haversine(q, r)) * (1 + 1e-9) + 1e-6


def test_cumulative_distances_equal_spacing():
    dlat = math.degrees(10.0 / 6_371_000)
    pts = [GeoPoint(i * dlat, 0.0, 0.0) for i in range(3)]
    np.testing.assert_allclose(cumulative_distances(pts), [0, 10, 20], atol=1e-9)
    same = [GeoPoint(1.0, 1.0, 0.0)] * 2
    np.testing.assert_array_equal(cumulative_distances(same), [0.0, 0.0])


@settings(max_examples=50)
@given(st.lists(geo, min_size=2, max_size=20))
def test_cumulative_distances_sum_of_steps(points):
    d = cumulative_distances(points)
    assert np.all(np.diff(d) >= 0)
    steps = sum(haversine(a, b) for a, b in zip(points, points[1:]))
    assert d[-1] == pytest.approx(steps, rel=1e-9, abs=1e-6)


def test_local_xy_projection():
    xy = to_local_xy([GeoPoint(0, 0, 0), GeoPoint(0.001, 0, 0)])
    assert xy[0] == (0.0, 0.0)
    assert xy[1].y == pytest.approx(111.195, abs=0.01)
    assert xy[1].x == 0.0
    east = to_local_xy([GeoPoint(60, 0, 0), GeoPoint(60, 0.001, 0)])
    assert east[1].x == pytest.approx(55.597, abs=0.01)


def test_headings_cardinal_directions():
    assert headings([GeoPoint(0, 0, 0), GeoPoint(0.001, 0, 0)])[0] == pytest.approx(0.0, abs=1e-9)
    assert headings([GeoPoint(0, 0, 0), GeoPoint(0, 0.001, 0)])[0] == pytest.approx(math.pi / 2, abs=1e-9)
    assert headings([GeoPoint(0, 0, 0), GeoPoint(1e-4, 1e-4, 0)])[0] == pytest.approx(math.pi / 4, abs=1e-6)
    south = headings([GeoPoint(0.001, 0, 0), GeoPoint(0, 0, 0)])[0]
    assert south == pytest.approx(math.pi, abs=1e-9)


def test_headings_last_copies_previous_and_duplicates():
    pts = [GeoPoint(0, 0, 0), GeoPoint(0, 0, 0), GeoPoint(0, 0.001, 0), GeoPoint(0.001, 0.001, 0)]
    h = headings(pts)
    assert h[0] == 0.0  # duplicate at the start
    assert h[1] == pytest.approx(math.pi / 2)
    assert h[3] == h[2]


# --- slope -----------------------------------------------------------------


def test_slope_constant_elevation_is_zero():
    d = np.arange(20) * 10.0
    np.testing.assert_array_equal(slope_angles(np.full(20, 100.0), d), 0.0)


def test_slope_uniform_grade():
    grid = build_grid(F.straight_course(1_000.0, grade=0.01))
    np.testing.assert_allclose(grid.theta, math.atan(0.01), atol=1e-6)
    d = np.arange(30) * 100.0
    np.testing.assert_allclose(slope_angles(d / 100.0, d), math.atan(0.01), atol=1e-12)


@settings(max_examples=50)
@given(st.lists(st.floats(-50, 50), min_size=11, max_size=40), st.floats(0.1, 5.0))
def test_slope_vertical_scaling(ele, c):
    ele = np.array(ele)
    d = np.arange(len(ele)) * 10.0
    base = slope_angles(ele, d)
    np.testing.assert_allclose(slope_angles(c * ele, d), np.arctan(c * np.tan(base)), atol=1e-12)


def test_slope_zero_run_is_degenerate():
    with pytest.raises(DegenerateGeometryError):
        slope_angles([0.0, 1.0], [0.0, 0.0])


# --- curvature -------------------------------------------------------------


def circle_points(r, n=7, cx=0.0, cy=0.0, start=0.3, step=0.1):
    a = start + step * np.arange(n)
    return np.column_stack([cx + r * np.cos(a), cy + r * np.sin(a)])


def test_circle_fit_exact_recovery():
    xy = circle_points(50.0)
    _, _, r = fit_circles(xy[None, :, 0], xy[None, :, 1])
    assert abs(r[0] - 50.0) <= 1e-3


@settings(max_examples=50)
@given(
    st.floats(5.0, 2_000.0),
    st.floats(-1e4, 1e4),
    st.floats(-1e4, 1e4),
    st.floats(0.0, 2 * math.pi),
)
def test_circle_fit_invariant_under_rigid_motion(r, cx, cy, start):
    xy = circle_points(r, cx=cx, cy=cy, start=start, step=min(0.1, 10.0 / r))
    xc, yc, rr = fit_circles(xy[None, :, 0], xy[None, :, 1])
    assert abs(rr[0] - r) <= 1e-3


def test_collinear_window_takes_sentinel():
    xy = np.column_stack([np.arange(10.0) * 10.0, np.zeros(10)])
    np.testing.assert_array_equal(curvature_radii(xy), R_MAX)


def test_noisy_circle_radius():
    rng = np.random.default_rng(7)
    errs = []
    for _ in range(200):
        xy = circle_points(100.0, step=10.0 / 100.0) + rng.normal(0, 0.1, (7, 2))
        errs.append(curvature_radii(xy)[3] - 100.0)
    assert abs(np.median(errs)) <= 2.0


def test_curvature_window_must_be_odd():
    with pytest.raises(InputError):
        curvature_radii(np.zeros((10, 2)), k=4)


# --- grid ------------------------------------------------------------------


def test_grid_identity_at_data_points():
    points = F.straight_course(200.0, grade=0.03)
    grid = build_grid(points, spacing=10.0)
    d = cumulative_distances(points)
    # fixture points sit every 10 m, so gridpoints coincide with them
    np.testing.assert_allclose(grid.s[: len(d)], d, atol=1e-6)
    np.testing.assert_allclose(grid.ele, [p.ele for p in points], atol=1e-6)


def test_grid_midpoint_is_mean():
    dlat = math.degrees(20.0 / 6_371_000)
    grid = build_grid([GeoPoint(0, 0, 10.0), GeoPoint(dlat, 0, 30.0)], spacing=10.0)
    assert grid.ele[1] == pytest.approx(20.0)


def test_grid_count_for_tokyo_fixture(tokyo_grid):
    assert len(tokyo_grid) == math.floor(tokyo_grid.total_length / 10.0) + 1
    assert abs(tokyo_grid.total_length - 44_200) < 500
    assert tokyo_grid.total_climb == pytest.approx(846.0, abs=1.0)
    assert 15 <= tokyo_grid.n_segments <= 25


def test_grid_drops_duplicates():
    pts = F.straight_course(100.0)
    grid = build_grid(pts[:3] + [pts[2]] + pts[3:])
    assert grid.meta["n_points"] == len(pts)


def test_heading_interpolation_across_seam():
    # course bending left through north: headings near 2π and near 0 interpolate on the circle
    xy = F.path_xy([("s", 100.0), ("a", 200.0, -20.0), ("s", 100.0)], heading_deg=10.0)
    grid = build_grid(F.points_from_xy(xy, np.zeros(len(xy))))
    h = np.unwrap(grid.heading)
    assert np.all(np.abs(np.diff(h)) < 0.1)
    assert h[0] - h[-1] == pytest.approx(math.radians(20.0), abs=1e-3)


def test_grid_at_interpolates():
    grid = build_grid(F.straight_course(100.0, grade=0.05))
    s = grid.at(15.0)
    assert s.ele == pytest.approx(0.5 * (grid.ele[1] + grid.ele[2]))
    assert grid.at(1e9).s == 1e9


def test_reversal_negates_slope_and_flips_heading():
    points = F.sine_hill_course(2_000.0, 40.0)
    fwd = build_grid(points)
    rev = build_grid(points[::-1])
    n = min(len(fwd), len(rev))
    inner = slice(10, n - 10)
    np.testing.assert_allclose(rev.theta[::-1][inner], -fwd.theta[: len(rev)][inner], atol=1e-4)
    dh = np.mod(rev.heading[::-1][inner] - fwd.heading[: len(rev)][inner] - math.pi + 1, 2 * math.pi) - 1
    np.testing.assert_allclose(dh, 0.0, atol=1e-6)


# --- segmentation ----------------------------------------------------------


def test_constant_climb_has_no_interior_bounds():
    grid = build_grid(F.straight_course(3_000.0, grade=0.04))
    assert segment_track(grid) == [0.0, grid.total_length]


def test_sine_hill_bounds_at_crest_and_steepest_points():
    L = 4_000.0
    grid = build_grid(F.sine_hill_course(L, 100.0))
    b = segment_track(grid)
    assert len(b) == 5
    np.testing.assert_allclose(b[1:4], [L / 4, L / 2, 3 * L / 4], atol=10.0)


def test_merge_discards_later_close_boundary():
    assert merge_bounds([1_000.0, 1_040.0], 3_000.0, 500.0) == [0.0, 1_000.0, 3_000.0]
    assert merge_bounds([2_900.0], 3_000.0, 500.0) == [0.0, 2_900.0, 3_000.0]


def test_local_extrema_plateau():
    z = np.array([0, 1, 2, 3, 3, 3, 2, 1, 0, 0, 0, 0, 0], dtype=float)
    idx = local_extrema(z, half_window=2)
    assert {3, 4, 5} <= set(idx)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(50, 3_000), st.floats(5, 80)), min_size=1, max_size=4), st.floats(50, 800))
def test_segment_bounds_properties(hills, min_len):
    lengths = np.cumsum([h[0] for h in hills])
    L = float(lengths[-1]) + 500.0
    layout = [(a, a + w / 2, a + w, h) for a, (w, h) in zip(np.concatenate(([0.0], lengths[:-1])), hills)]
    xy = F.path_xy([("s", L)])
    s = np.concatenate(([0.0], np.cumsum(np.hypot(*np.diff(xy, axis=0).T))))
    grid = build_grid(F.points_from_xy(xy, F.hill_profile(s, layout)))
    b = segment_track(grid, min_len)
    assert b[0] == 0.0 and b[-1] == grid.total_length
    gaps = np.diff(b)
    assert np.all(gaps > 0)
    assert np.all(gaps[:-1] >= min_len)


def test_min_segment_below_spacing_rejected(tokyo_grid):
    with pytest.raises(InputError):
        segment_track(tokyo_grid, 5.0)


def test_segment_index_half_open(tokyo_grid):
    b = tokyo_grid.segment_bounds
    assert tokyo_grid.segment_index(b[1]) == 1
    assert tokyo_grid.segment_index(b[1] - 1e-9) == 0
    assert tokyo_grid.segment_index(b[-1]) == tokyo_grid.n_segments - 1
    ids = segment_ids(tokyo_grid)
    assert ids[0] == 0 and ids[-1] == tokyo_grid.n_segments - 1
    assert np.all(np.diff(ids) >= 0)


def test_with_segments_validation(tokyo_grid):
    with pytest.raises(InputError):
        tokyo_grid.with_segments([0.0, 10.0])
    with pytest.raises(InputError):
        tokyo_grid.with_segments([0.0, 50.0, 50.0, tokyo_grid.total_length])


def test_two_point_track_is_one_segment():
    dlat = math.degrees(100.0 / 6_371_000)
    grid = load_track(gpx(pt(0, 0) + pt(dlat, 0)))
    assert grid.n_segments == 1


def test_grid_is_read_only(tokyo_grid):
    with pytest.raises(ValueError):
        tokyo_grid.ele[0] = 1.0


def test_bank_sidecar():
    grid = build_grid(F.straight_course(100.0))
    bank = load_bank_csv("s_m,bank_rad\n0,0\n100,0.2\n", grid)
    assert bank[5] == pytest.approx(0.1, rel=1e-6)
    with pytest.raises(InputError):
        load_bank_csv("s,b\n0,0\n", grid)
    with pytest.raises(InputError):
        load_bank_csv("s_m,bank_rad\n0,x\n", grid)
