"""GPX ingestion and the gridded, segmented course model.

All geometry is on a sphere of radius :data:`EARTH_RADIUS`. Distances are
horizontal-plane distances; every gridded quantity is keyed on cumulative
horizontal distance ``s`` from the start.
"""

from __future__ import annotations

import csv
import io
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    DegenerateGeometryError,
    GPXParseError,
    GPXSchemaError,
    InputError,
    InsufficientDataError,
)

EARTH_RADIUS = 6_371_000.0
R_MAX = 1.0e7  # radius sentinel for straight (collinear) windows
SLOPE_WINDOW = 5
CIRCLE_WINDOW = 7
EXTREMA_HALF_WINDOW = 5
DEFAULT_SPACING = 10.0
DEFAULT_MIN_SEGMENT = 300.0

_TWO_PI = 2.0 * math.pi


class GeoPoint(NamedTuple):
    lat: float
    lon: float
    ele: float


class LocalXY(NamedTuple):
    x: float  # metres east
    y: float  # metres north


class TrackSample(NamedTuple):
    s: float
    ele: float
    theta: float
    radius: float
    heading: float
    bank: float = 0.0


@dataclass(frozen=True, eq=False)
class TrackGrid:
    """Course quantities sampled every ``spacing`` metres of horizontal distance.

    Columns are stored as read-only numpy arrays; ``samples`` gives the
    row view. ``segment_bounds`` always starts at 0 and ends at ``total_length``.
    """

    spacing: float
    s: np.ndarray
    ele: np.ndarray
    theta: np.ndarray
    radius: np.ndarray
    heading: np.ndarray
    bank: np.ndarray
    total_length: float
    segment_bounds: tuple = ()
    total_climb: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("s", "ele", "theta", "radius", "heading", "bank"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not self.segment_bounds:
            object.__setattr__(self, "segment_bounds", (0.0, float(self.total_length)))
        else:
            object.__setattr__(self, "segment_bounds", tuple(float(b) for b in self.segment_bounds))

    def __len__(self):
        return len(self.s)

    @property
    def n_segments(self) -> int:
        return len(self.segment_bounds) - 1

    @property
    def samples(self) -> list[TrackSample]:
        return [self.sample(j) for j in range(len(self.s))]

    def sample(self, j: int) -> TrackSample:
        return TrackSample(
            float(self.s[j]),
            float(self.ele[j]),
            float(self.theta[j]),
            float(self.radius[j]),
            float(self.heading[j]),
            float(self.bank[j]),
        )

    def at(self, x: float) -> TrackSample:
        """Linearly interpolated sample at horizontal distance ``x`` (clamped to the grid)."""
        n = len(self.s)
        if n == 1:
            return self.sample(0)
        u = max(x, 0.0) / self.spacing
        j = int(u)
        if j >= n - 1:
            j, f = n - 2, min(1.0, u - (n - 2))
        else:
            f = u - j
        lerp = lambda a: float(a[j] + f * (a[j + 1] - a[j]))
        h0, h1 = self.heading[j], self.heading[j + 1]
        sx = math.sin(h0) + f * (math.sin(h1) - math.sin(h0))
        cx = math.cos(h0) + f * (math.cos(h1) - math.cos(h0))
        return TrackSample(
            float(x),
            lerp(self.ele),
            lerp(self.theta),
            lerp(self.radius),
            math.atan2(sx, cx) % _TWO_PI,
            lerp(self.bank),
        )

    def segment_index(self, x: float) -> int:
        """Segment containing ``x``; intervals are half-open ``[b_i, b_{i+1})``."""
        i = int(np.searchsorted(self.segment_bounds, x, side="right")) - 1
        return min(max(i, 0), self.n_segments - 1)

    def with_segments(self, bounds: Sequence[float]) -> "TrackGrid":
        bounds = list(bounds)
        if not bounds or bounds[0] != 0.0 or bounds[-1] != self.total_length:
            raise InputError("segment bounds must start at 0 and end at total_length")
        if any(b1 <= b0 for b0, b1 in zip(bounds, bounds[1:])):
            raise InputError("segment bounds must be strictly increasing")
        return replace(self, segment_bounds=tuple(bounds))

    def with_bank(self, bank: np.ndarray) -> "TrackGrid":
        return replace(self, bank=np.asarray(bank, dtype=float))


# ---------------------------------------------------------------------------
# GPX


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def parse_gpx(data: bytes | str) -> list[GeoPoint]:
    """Read every ``trk/trkseg/trkpt`` in document order, segments concatenated."""
    if isinstance(data, str):
        data = data.encode()
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise GPXParseError(f"malformed GPX: {exc}") from exc
    if _local(root.tag) != "gpx":
        raise GPXParseError(f"root element is <{_local(root.tag)}>, expected <gpx>")

    points = []
    for trk in (el for el in root if _local(el.tag) == "trk"):
        for seg in (el for el in trk if _local(el.tag) == "trkseg"):
            for pt in (el for el in seg if _local(el.tag) == "trkpt"):
                try:
                    lat = float(pt.attrib["lat"])
                    lon = float(pt.attrib["lon"])
                except KeyError as exc:
                    raise GPXSchemaError(f"trackpoint {len(points)} lacks {exc.args[0]!r}") from None
                except ValueError as exc:
                    raise GPXSchemaError(f"trackpoint {len(points)}: {exc}") from None
                ele_el = next((c for c in pt if _local(c.tag) == "ele"), None)
                if ele_el is None or not (ele_el.text or "").strip():
                    raise GPXSchemaError(f"trackpoint {len(points)} has no <ele>")
                try:
                    ele = float(ele_el.text)
                except ValueError:
                    raise GPXSchemaError(f"trackpoint {len(points)}: bad elevation {ele_el.text!r}") from None
                if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0 and math.isfinite(ele)):
                    raise GPXSchemaError(f"trackpoint {len(points)} out of range: {lat}, {lon}, {ele}")
                points.append(GeoPoint(lat, lon, ele))
    if len(points) < 2:
        raise InsufficientDataError(f"need at least 2 trackpoints, found {len(points)}")
    return points


def write_gpx(points: Sequence[GeoPoint], name: str = "course") -> str:
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<gpx version="1.1" creator="cyclepace" xmlns="http://www.topografix.com/GPX/1/1">',
        f"  <trk><name>{name}</name><trkseg>",
    ]
    for p in points:
        lines.append(f'    <trkpt lat="{p.lat:.8f}" lon="{p.lon:.8f}"><ele>{p.ele:.2f}</ele></trkpt>')
    lines.append("  </trkseg></trk>")
    lines.append("</gpx>")
    return "\n".join(lines) + "\n"


def drop_duplicates(points: Sequence[GeoPoint]) -> list[GeoPoint]:
    """Remove consecutive points that repeat the previous lat/lon."""
    out = [points[0]]
    for p in points[1:]:
        if p.lat != out[-1].lat or p.lon != out[-1].lon:
            out.append(p)
    return out


# ---------------------------------------------------------------------------
# geodesy


def _latlon_radians(points):
    arr = np.asarray([(p[0], p[1]) for p in points], dtype=float)
    return np.radians(arr[:, 0]), np.radians(arr[:, 1])


def _haversine_rad(lat1, lon1, lat2, lon2):
    h = np.sin((lat2 - lat1) / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2
    return 2.0 * EARTH_RADIUS * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def haversine(p: GeoPoint, q: GeoPoint) -> float:
    """Great-circle distance in metres."""
    lat1, lon1, lat2, lon2 = map(math.radians, (p[0], p[1], q[0], q[1]))
    return float(_haversine_rad(lat1, lon1, lat2, lon2))


def cumulative_distances(points: Sequence[GeoPoint]) -> np.ndarray:
    lat, lon = _latlon_radians(points)
    steps = _haversine_rad(lat[:-1], lon[:-1], lat[1:], lon[1:])
    return np.concatenate(([0.0], np.cumsum(steps)))


def slope_angles(elevations, distances, k: int = SLOPE_WINDOW) -> np.ndarray:
    """Centred-difference slope over ``±k`` points, windows clipped at the ends."""
    a = np.asarray(elevations, dtype=float)
    d = np.asarray(distances, dtype=float)
    if a.shape != d.shape or a.ndim != 1 or len(a) < 2:
        raise InputError("elevations and distances must be 1-D arrays of equal length >= 2")
    idx = np.arange(len(a))
    lo = np.clip(idx - k, 0, len(a) - 1)
    hi = np.clip(idx + k, 0, len(a) - 1)
    run = d[hi] - d[lo]
    if np.any(run <= 0.0):
        bad = int(np.flatnonzero(run <= 0.0)[0])
        raise DegenerateGeometryError(f"zero horizontal run in slope window around point {bad}")
    return np.arctan((a[hi] - a[lo]) / run)


def to_local_xy(points: Sequence[GeoPoint]) -> list[LocalXY]:
    xy = _local_xy_array(points)
    return [LocalXY(float(x), float(y)) for x, y in xy]


def _local_xy_array(points) -> np.ndarray:
    lat, lon = _latlon_radians(points)
    x = EARTH_RADIUS * (lon - lon[0]) * math.cos(lat[0])
    y = EARTH_RADIUS * (lat - lat[0])
    return np.column_stack([x, y])


def from_local_xy(xy, lat0: float, lon0: float) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of the tangent-plane projection; returns (lat, lon) in degrees."""
    xy = np.asarray(xy, dtype=float)
    lat0r = math.radians(lat0)
    lat = lat0r + xy[:, 1] / EARTH_RADIUS
    lon = math.radians(lon0) + xy[:, 0] / (EARTH_RADIUS * math.cos(lat0r))
    return np.degrees(lat), np.degrees(lon)


def headings(points: Sequence[GeoPoint]) -> np.ndarray:
    """Initial bearing to the next point, clockwise from north in ``[0, 2π)``."""
    lat, lon = _latlon_radians(points)
    n = len(lat)
    dlon = lon[1:] - lon[:-1]
    x = np.sin(dlon) * np.cos(lat[1:])
    y = np.cos(lat[:-1]) * np.sin(lat[1:]) - np.sin(lat[:-1]) * np.cos(lat[1:]) * np.cos(dlon)
    raw = np.mod(np.arctan2(x, y), _TWO_PI)
    same = (lat[1:] == lat[:-1]) & (lon[1:] == lon[:-1])
    out = np.empty(n)
    prev = 0.0
    for i in range(n - 1):
        if not same[i]:
            prev = raw[i]
        out[i] = prev
    out[n - 1] = out[n - 2] if n > 1 else 0.0
    # atan2 can return exactly 2π after mod for tiny negative angles
    out[out >= _TWO_PI] = 0.0
    return out


# ---------------------------------------------------------------------------
# curvature


def _window_indices(n: int, k: int) -> np.ndarray:
    half = k // 2
    start = np.clip(np.arange(n) - half, 0, max(n - k, 0))
    return start[:, None] + np.arange(min(k, n))[None, :]


def fit_circles(px: np.ndarray, py: np.ndarray, max_iter: int = 50):
    """Batched circle fit over rows of ``px``/``py`` (shape ``(W, k)``).

    Algebraic (Kasa) solution followed by Gauss-Newton on the geometric
    residuals ``|p - c| - r``. Returns ``(xc, yc, r)``; degenerate rows get
    ``r = R_MAX`` and NaN centres.
    """
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    mx = px.mean(axis=1, keepdims=True)
    my = py.mean(axis=1, keepdims=True)
    u = px - mx
    v = py - my
    W, k = u.shape

    extent = np.sqrt((u**2 + v**2).max(axis=1))
    cov = np.stack(
        [
            np.stack([(u * u).mean(1), (u * v).mean(1)], -1),
            np.stack([(u * v).mean(1), (v * v).mean(1)], -1),
        ],
        -2,
    )
    eig = np.linalg.eigvalsh(cov)
    flat = (extent == 0.0) | (eig[:, 0] <= 1e-14 * np.maximum(eig[:, 1], 1e-300))

    xc = np.full(W, np.nan)
    yc = np.full(W, np.nan)
    r = np.full(W, R_MAX)
    ok = ~flat
    if not ok.any():
        return xc, yc, r

    uo, vo = u[ok], v[ok]
    A = np.stack([uo, vo, np.ones_like(uo)], axis=-1)
    b = -(uo**2 + vo**2)
    AtA = np.einsum("wki,wkj->wij", A, A)
    Atb = np.einsum("wki,wk->wi", A, b)
    sol = np.linalg.solve(AtA, Atb[..., None])[..., 0]
    cx = -sol[:, 0] / 2.0
    cy = -sol[:, 1] / 2.0
    rr = np.sqrt(np.maximum(cx**2 + cy**2 - sol[:, 2], 0.0))

    def cost(cx, cy, rr):
        return ((np.hypot(uo - cx[:, None], vo - cy[:, None]) - rr[:, None]) ** 2).sum(1)

    # Gauss-Newton only where the algebraic fit is a sensible finite circle.
    live = np.isfinite(rr) & (rr > 0) & (rr < R_MAX)
    c_now = np.where(live, cost(cx, cy, rr), np.inf)
    for _ in range(max_iter):
        if not live.any():
            break
        dx = uo[live] - cx[live, None]
        dy = vo[live] - cy[live, None]
        rho = np.hypot(dx, dy)
        rho = np.where(rho == 0.0, 1e-300, rho)
        res = rho - rr[live, None]
        J = np.stack([-dx / rho, -dy / rho, -np.ones_like(rho)], axis=-1)
        JtJ = np.einsum("wki,wkj->wij", J, J)
        Jtr = np.einsum("wki,wk->wi", J, res)
        JtJ = JtJ + 1e-12 * np.trace(JtJ, axis1=1, axis2=2)[:, None, None] * np.eye(3)
        try:
            delta = np.linalg.solve(JtJ, -Jtr[..., None])[..., 0]
        except np.linalg.LinAlgError:
            break
        idx = np.flatnonzero(live)
        ncx, ncy, nrr = cx[idx] + delta[:, 0], cy[idx] + delta[:, 1], rr[idx] + delta[:, 2]
        full = (cx.copy(), cy.copy(), rr.copy())
        full[0][idx], full[1][idx], full[2][idx] = ncx, ncy, nrr
        new_cost = cost(*full)[idx]
        better = new_cost <= c_now[idx]
        take = idx[better]
        cx[take], cy[take], rr[take] = ncx[better], ncy[better], nrr[better]
        step = np.abs(delta).max(axis=1)
        converged = ~better | (step <= 1e-12 * np.maximum(np.abs(rr[idx]), 1.0))
        c_now[take] = new_cost[better]
        live[idx[converged]] = False

    rr = np.abs(rr)
    bad = ~np.isfinite(rr) | (rr <= 0.0) | (rr >= R_MAX)
    rr[bad] = R_MAX
    cx[bad] = np.nan
    cy[bad] = np.nan
    xc[ok] = cx + mx[ok, 0]
    yc[ok] = cy + my[ok, 0]
    r[ok] = rr
    return xc, yc, r


def curvature_radii(xy, k: int = CIRCLE_WINDOW) -> np.ndarray:
    """Radius of the circle fitted to the ``k`` points centred on each point."""
    if k < 3 or k % 2 == 0:
        raise InputError("circle-fit window must be an odd number >= 3")
    xy = np.asarray(xy, dtype=float)
    n = len(xy)
    if n < 3:
        return np.full(n, R_MAX)
    win = _window_indices(n, k)
    _, _, r = fit_circles(xy[win, 0], xy[win, 1])
    return r


# ---------------------------------------------------------------------------
# gridding and segmentation


def _circular_interp(h0, h1, w):
    sx = w * np.sin(h0) + (1.0 - w) * np.sin(h1)
    cx = w * np.cos(h0) + (1.0 - w) * np.cos(h1)
    out = np.mod(np.arctan2(sx, cx), _TWO_PI)
    out = np.where(w == 1.0, h0, np.where(w == 0.0, h1, out))
    out[out >= _TWO_PI] = 0.0
    return out


def build_grid(points: Sequence[GeoPoint], spacing: float = DEFAULT_SPACING) -> TrackGrid:
    """Compute per-point geometry and resample it onto a regular grid."""
    if spacing <= 0:
        raise InputError("grid spacing must be positive")
    pts = drop_duplicates(list(points))
    if len(pts) < 2:
        raise InsufficientDataError("need at least 2 distinct trackpoints")

    d = cumulative_distances(pts)
    ele = np.array([p.ele for p in pts], dtype=float)
    theta = slope_angles(ele, d)
    radius = curvature_radii(_local_xy_array(pts))
    heading = headings(pts)
    total = float(d[-1])

    n_grid = int(math.floor(total / spacing + 1e-9)) + 1
    s = np.arange(n_grid) * spacing
    i = np.clip(np.searchsorted(d, s, side="right") - 1, 0, len(d) - 2)
    w = (d[i + 1] - s) / (d[i + 1] - d[i])
    lerp = lambda z: w * z[i] + (1.0 - w) * z[i + 1]

    climb = float(np.clip(np.diff(ele), 0.0, None).sum())
    return TrackGrid(
        spacing=float(spacing),
        s=s,
        ele=lerp(ele),
        theta=lerp(theta),
        radius=lerp(radius),
        heading=_circular_interp(heading[i], heading[i + 1], w),
        bank=np.zeros(n_grid),
        total_length=total,
        total_climb=climb,
        meta={"n_points": len(pts)},
    )


def local_extrema(signal, half_window: int = EXTREMA_HALF_WINDOW, tol: float = 1e-9) -> np.ndarray:
    """Indices that are a max or min of their ``±half_window`` neighbourhood.

    Ties within ``tol`` are allowed (plateaus) but the point must be strictly
    beyond ``tol`` of at least one neighbour on one side.
    """
    z = np.asarray(signal, dtype=float)
    n = len(z)
    out = []
    for j in range(n):
        lo, hi = max(0, j - half_window), min(n, j + half_window + 1)
        left, right = z[lo:j], z[j + 1 : hi]
        win = z[lo:hi]
        if z[j] >= win.max() - tol:
            if (left.size and left.min() < z[j] - tol) or (right.size and right.min() < z[j] - tol):
                out.append(j)
                continue
        if z[j] <= win.min() + tol:
            if (left.size and left.max() > z[j] + tol) or (right.size and right.max() > z[j] + tol):
                out.append(j)
    return np.asarray(out, dtype=int)


def merge_bounds(candidates, total_length: float, min_segment_length: float) -> list[float]:
    kept = [0.0]
    for b in sorted(set(float(c) for c in candidates)):
        if b <= 0.0 or b >= total_length:
            continue
        if b - kept[-1] >= min_segment_length:
            kept.append(b)
    kept.append(float(total_length))
    return kept


def segment_track(grid: TrackGrid, min_segment_length: float = DEFAULT_MIN_SEGMENT) -> list[float]:
    """Boundaries at local extrema of gridded elevation and slope, merged to a minimum length."""
    if min_segment_length < grid.spacing:
        raise InputError("min_segment_length must be at least the grid spacing")
    idx = np.union1d(local_extrema(grid.ele, tol=1e-6), local_extrema(grid.theta, tol=1e-9))
    return merge_bounds(grid.s[idx], grid.total_length, min_segment_length)


def load_bank_csv(data: bytes | str, grid: TrackGrid) -> np.ndarray:
    """Piecewise-linear bank angle (``s_m,bank_rad``) resampled onto the grid."""
    if isinstance(data, bytes):
        data = data.decode()
    reader = csv.DictReader(io.StringIO(data))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["s_m", "bank_rad"]:
        raise InputError("bank file header must be 's_m,bank_rad'")
    rows = []
    for line, row in enumerate(reader, start=2):
        try:
            rows.append((float(row["s_m"]), float(row["bank_rad"])))
        except (TypeError, ValueError):
            raise InputError(f"bank file line {line}: non-numeric value") from None
    if not rows:
        raise InputError("bank file has no rows")
    rows.sort()
    s, b = np.array(rows).T
    return np.interp(grid.s, s, b)


def load_track(
    gpx: bytes | str,
    spacing: float = DEFAULT_SPACING,
    min_segment_length: float = DEFAULT_MIN_SEGMENT,
    bank_csv: bytes | str | None = None,
) -> TrackGrid:
    grid = build_grid(parse_gpx(gpx), spacing)
    if bank_csv is not None:
        grid = grid.with_bank(load_bank_csv(bank_csv, grid))
    return grid.with_segments(segment_track(grid, min_segment_length))


def segment_ids(grid: TrackGrid) -> np.ndarray:
    b = np.asarray(grid.segment_bounds)
    return np.clip(np.searchsorted(b, grid.s, side="right") - 1, 0, grid.n_segments - 1)
