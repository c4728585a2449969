"""Compiled Euler integrator shared by every simulation entry point.

One step is defined once (``advance``) and reused by the lockstep batch loop
and the trajectory-recording loop, so all paths are bit-identical.
"""

import numpy as np
from numba import njit

V_EPS = 1.0

RUNNING = 0
FINISHED = 1
DNF = 2
PAUSED = 3


@njit(nogil=True, cache=True, inline="always")
def advance(x, v, e, p, r, sin_t, cos_t, wind, vmax, spacing, mass, drag_k, grav_f, roll_f, p_c, dt):
    if e <= 0.0 and p > p_c:
        p = p_c
        r = 0.0
    n = sin_t.shape[0]
    u = x / spacing
    j = int(u)
    if j >= n - 1:
        j = n - 2
        f = u - j
        if f > 1.0:
            f = 1.0
    else:
        f = u - j
    st = sin_t[j] + f * (sin_t[j + 1] - sin_t[j])
    ct = cos_t[j] + f * (cos_t[j + 1] - cos_t[j])
    w = wind[j] + f * (wind[j + 1] - wind[j])
    vm = vmax[j] + f * (vmax[j + 1] - vmax[j])

    va = v - w
    vp = v if v > V_EPS else V_EPS
    force = p / vp - drag_k * va * abs(va) - grav_f * st - roll_f * ct
    vn = v + dt * force / mass
    if vn > vm:
        vn = vm
    if vn < 0.0:
        vn = 0.0
    xn = x + dt * vn * ct
    en = e + dt * r
    if en < 0.0:
        en = 0.0
    elif en > 1.0:
        en = 1.0
    return xn, vn, en, p


@njit(nogil=True, cache=True)
def _segment_of(x, bounds):
    a = bounds.shape[0] - 1
    s = 0
    while s + 1 < a and x >= bounds[s + 1]:
        s += 1
    return s


@njit(nogil=True, cache=True)
def _next_boundary(x, bounds):
    k = 1
    while k < bounds.shape[0] and bounds[k] <= x:
        k += 1
    return k


@njit(nogil=True, cache=True)
def integrate(
    x, v, e, t, power, rate, bounds,
    sin_t, cos_t, wind, vmax, spacing,
    mass, drag_k, grav_f, roll_f, p_c,
    dt, t_max, length, stop_x,
    status, finish, splits, record_splits,
):
    """Advance every simulation in lockstep until it finishes, DNFs, or pauses.

    State arrays ``x, v, e, t`` are updated in place. A simulation pauses
    (status PAUSED) at the start of the first step with ``x >= stop_x``.
    ``splits[i, k-1]`` receives the crossing time of ``bounds[k]``.
    """
    n = x.shape[0]
    a = bounds.shape[0] - 1
    seg = np.empty(n, np.int64)
    nxt = np.empty(n, np.int64)
    live = np.empty(n, np.int64)
    nlive = 0
    for i in range(n):
        if status[i] == RUNNING:
            seg[i] = _segment_of(x[i], bounds)
            nxt[i] = _next_boundary(x[i], bounds)
            live[nlive] = i
            nlive += 1

    while nlive > 0:
        k = 0
        while k < nlive:
            i = live[k]
            xi = x[i]
            if xi >= stop_x:
                status[i] = PAUSED
                live[k] = live[nlive - 1]
                nlive -= 1
                continue
            s = seg[i]
            xn, vn, en, _ = advance(
                xi, v[i], e[i], power[i, s], rate[i, s], sin_t, cos_t, wind, vmax, spacing,
                mass, drag_k, grav_f, roll_f, p_c, dt,
            )
            ti = t[i]
            if record_splits:
                while nxt[i] <= a and xn >= bounds[nxt[i]]:
                    b = bounds[nxt[i]]
                    splits[i, nxt[i] - 1] = ti + dt * (b - xi) / (xn - xi)
                    nxt[i] += 1
            while s + 1 < a and xn >= bounds[s + 1]:
                s += 1
            seg[i] = s
            x[i] = xn
            v[i] = vn
            e[i] = en
            t[i] = ti + dt
            done = False
            if xn >= length:
                finish[i] = ti + dt * (length - xi) / (xn - xi)
                status[i] = FINISHED
                done = True
            elif ti + dt > t_max:
                status[i] = DNF
                done = True
            if done:
                live[k] = live[nlive - 1]
                nlive -= 1
            else:
                k += 1


@njit(nogil=True, cache=True)
def integrate_recording(
    x, v, e, t, power, rate, bounds,
    sin_t, cos_t, wind, vmax, spacing,
    mass, drag_k, grav_f, roll_f, p_c,
    dt, t_max, length, traj, splits,
):
    """Single simulation storing ``(t, x, v, energy, power)`` before every step.

    Returns ``(status, finish_time, rows_written)``.
    """
    a = bounds.shape[0] - 1
    s = _segment_of(x, bounds)
    nxt = _next_boundary(x, bounds)
    row = 0
    cap = traj.shape[0]
    while True:
        xn, vn, en, p_eff = advance(
            x, v, e, power[s], rate[s], sin_t, cos_t, wind, vmax, spacing,
            mass, drag_k, grav_f, roll_f, p_c, dt,
        )
        if row < cap:
            traj[row, 0] = t
            traj[row, 1] = x
            traj[row, 2] = v
            traj[row, 3] = e
            traj[row, 4] = p_eff
            row += 1
        while nxt <= a and xn >= bounds[nxt]:
            splits[nxt - 1] = t + dt * (bounds[nxt] - x) / (xn - x)
            nxt += 1
        while s + 1 < a and xn >= bounds[s + 1]:
            s += 1
        if xn >= length:
            fin = t + dt * (length - x) / (xn - x)
            t = t + dt
            if row < cap:
                traj[row, 0] = t
                traj[row, 1] = xn
                traj[row, 2] = vn
                traj[row, 3] = en
                traj[row, 4] = p_eff
                row += 1
            return FINISHED, fin, row
        t = t + dt
        x = xn
        v = vn
        e = en
        if t > t_max:
            return DNF, np.nan, row
