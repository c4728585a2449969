"""Omni-PD power-duration curve: evaluation, inversion, fitting, and MMP I/O."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, asdict
from typing import NamedTuple, Sequence

import numpy as np

from .errors import FitError, InputError, InsufficientDataError, MMPParseError, UnsustainablePowerError

T_HORIZON = 86_400.0
T_LO = 1e-6
_BISECT_ITERS = 64


class MMPoint(NamedTuple):
    duration: float
    power: float


@dataclass(frozen=True)
class OmniPDParams:
    p_max: float
    p_c: float
    w_prime: float  # joules
    t_cpmax: float
    beta: float

    def __post_init__(self):
        if not (self.p_max > self.p_c > 0):
            raise InputError(f"need p_max > p_c > 0, got {self.p_max}, {self.p_c}")
        if self.w_prime <= 0 or self.t_cpmax <= 0 or self.beta < 0:
            raise InputError("need w_prime > 0, t_cpmax > 0, beta >= 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.p_max, self.p_c, self.w_prime, self.t_cpmax, self.beta])

    def to_json(self, name: str = "", rms: float | None = None) -> dict:
        out = {
            "name": name,
            "p_max_w": self.p_max,
            "p_c_w": self.p_c,
            "w_prime_j": self.w_prime,
            "t_cpmax_s": self.t_cpmax,
            "beta_w": self.beta,
        }
        if rms is not None:
            out["rms_residual_w"] = rms
        return out

    @classmethod
    def from_json(cls, d: dict) -> "OmniPDParams":
        try:
            return cls(
                float(d["p_max_w"]), float(d["p_c_w"]), float(d["w_prime_j"]), float(d["t_cpmax_s"]), float(d["beta_w"])
            )
        except KeyError as exc:
            raise InputError(f"power-curve JSON missing {exc.args[0]!r}") from None


@dataclass(frozen=True)
class RiderProfile:
    name: str
    mass: float
    frontal_area: float
    drag_coeff: float
    curve: OmniPDParams

    def __post_init__(self):
        if self.mass <= 0 or self.frontal_area <= 0 or self.drag_coeff <= 0:
            raise InputError("rider mass, frontal area and drag coefficient must be positive")

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "mass_kg": self.mass,
            "frontal_area_m2": self.frontal_area,
            "drag_coeff": self.drag_coeff,
            "curve": self.curve.to_json(self.name),
        }


def _curve(p_max, p_c, w, t_cp, beta, t):
    t = np.asarray(t, dtype=float)
    x = t * (p_max - p_c) / w
    # (1 - e^-x)/x is numerically 1 - x/2 for tiny x
    base = np.where(x < 1e-8, (p_max - p_c) * (1.0 - x / 2.0), (w / t) * -np.expm1(-x)) + p_c
    return np.where(t > t_cp, base - beta * np.log(t / t_cp), base)


def omni_pd_power(params: OmniPDParams, t):
    """Maximum power sustainable for duration ``t`` seconds (scalar or array)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise InputError("duration must be positive")
    out = _curve(params.p_max, params.p_c, params.w_prime, params.t_cpmax, params.beta, t_arr)
    return float(out) if out.ndim == 0 else out


def power_floor(params: OmniPDParams) -> float:
    return omni_pd_power(params, T_HORIZON)


def omni_pd_inverse(params: OmniPDParams, p):
    """Duration for which power ``p`` can be held; ``T_HORIZON`` at or below the floor.

    Bisection on ``log t`` with a fixed iteration count, so array and scalar
    calls give identical results.
    """
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr >= params.p_max):
        raise UnsustainablePowerError(f"power {np.max(p_arr):.1f} W >= p_max {params.p_max:.1f} W")
    lo = np.full(p_arr.shape, math.log(T_LO))
    hi = np.full(p_arr.shape, math.log(T_HORIZON))
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        above = omni_pd_power(params, np.exp(mid)) > p_arr
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    t = np.exp(0.5 * (lo + hi))
    t = np.where(p_arr <= power_floor(params), T_HORIZON, t)
    return float(t) if t.ndim == 0 else t


# ---------------------------------------------------------------------------
# fitting


@dataclass(frozen=True)
class FitResult:
    params: OmniPDParams
    rms: float
    iterations: int


def _jacobian(theta, t):
    p_max, p_c, w, t_cp, beta = theta
    d = p_max - p_c
    x = t * d / w
    ex = np.exp(-x)
    after = t > t_cp
    J = np.empty((len(t), 5))
    J[:, 0] = ex
    J[:, 1] = 1.0 - ex
    J[:, 2] = -np.expm1(-x) / t - ex * d / w
    J[:, 3] = np.where(after, beta / t_cp, 0.0)
    J[:, 4] = np.where(after, -np.log(t / t_cp), 0.0)
    return J


def _project(theta):
    p_max, p_c, w, t_cp, beta = theta
    p_c = max(p_c, 1e-3)
    p_max = max(p_max, p_c * (1 + 1e-9) + 1e-6)
    return np.array([p_max, p_c, max(w, 1.0), max(t_cp, 1.0), max(beta, 0.0)])


def fit_omni_pd(points: Sequence[MMPoint], max_iter: int = 500) -> FitResult:
    """Least-squares Omni-PD fit by a projected Levenberg-Marquardt iteration."""
    if len(points) < 5:
        raise InsufficientDataError(f"need at least 5 MMP points, got {len(points)}")
    t = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    if not (t.min() < 60.0 and t.max() > 1200.0):
        raise InsufficientDataError("MMP durations must include one below 60 s and one above 1200 s")

    theta = _project(np.array([y.max(), y.min(), 20_000.0, 1_800.0, 10.0]))

    def residual(th):
        return _curve(*th, t) - y

    r = residual(theta)
    cost = float(r @ r)
    lam = 1e-3
    for it in range(1, max_iter + 1):
        J = _jacobian(theta, t)
        JtJ = J.T @ J
        g = J.T @ r
        scale = np.maximum(np.diag(JtJ), 1e-12 * max(np.diag(JtJ).max(), 1e-300))
        improved = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(JtJ + lam * np.diag(scale), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = _project(theta + step)
            rc = residual(cand)
            c_new = float(rc @ rc)
            if c_new < cost:
                moved = np.abs(cand - theta) / (np.abs(theta) + 1e-12)
                theta, r = cand, rc
                rel_drop = (cost - c_new) / max(cost, 1e-300)
                cost = c_new
                lam = max(lam / 10.0, 1e-12)
                improved = True
                break
            lam *= 10.0
        if not improved or moved.max() < 1e-12 or rel_drop < 1e-14 or cost < 1e-24 * len(t):
            return FitResult(OmniPDParams(*map(float, theta)), math.sqrt(cost / len(t)), it)
    raise FitError(
        f"Omni-PD fit did not converge in {max_iter} iterations",
        best=OmniPDParams(*map(float, theta)),
        rms=math.sqrt(cost / len(t)),
    )


# ---------------------------------------------------------------------------
# I/O


def load_mmp(data: bytes | str) -> list[MMPoint]:
    """Parse a ``duration_s,power_w`` CSV; duplicate durations keep the highest power."""
    if isinstance(data, bytes):
        data = data.decode()
    reader = csv.reader(io.StringIO(data))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["duration_s", "power_w"]:
        raise MMPParseError("MMP header must be 'duration_s,power_w'")
    best: dict[float, float] = {}
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise MMPParseError(f"line {line}: expected 2 columns")
        try:
            d, p = float(row[0]), float(row[1])
        except ValueError:
            raise MMPParseError(f"line {line}: non-numeric value") from None
        if not (d > 0 and p > 0 and math.isfinite(d) and math.isfinite(p)):
            raise MMPParseError(f"line {line}: values must be positive")
        best[d] = max(p, best.get(d, 0.0))
    return [MMPoint(d, best[d]) for d in sorted(best)]


def dump_mmp(points: Sequence[MMPoint]) -> str:
    lines = ["duration_s,power_w"] + [f"{d:.9g},{p:.9g}" for d, p in points]
    return "\n".join(lines) + "\n"


def curve_table(params: OmniPDParams, n: int = 200, t_min: float = 1.0, t_max: float = 14_400.0):
    t = np.geomspace(t_min, t_max, n)
    return t, omni_pd_power(params, t)
