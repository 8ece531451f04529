"""Compiled inner loops for the driver-evader system.

State vectors are float64 arrays laid out as
``[udx, udy, uex, uey, vdx, vdy, vex, vey]`` and parameter vectors as
``[m_d, m_e, nu_d, nu_e, c_attract, c_repel, c_circ, delta_c, delta_1, delta_2]``.
Everything here is ``nogil`` so independent runs can share a thread pool.
"""

import math

import numpy as np
from numba import njit

EULER = 0
RK4 = 1

STATUS_OK = 0
STATUS_DEGENERATE = 1
STATUS_NONFINITE = 2

# transition reasons recorded by the feedback kernel
REASON_INITIAL = 0
REASON_FAR = 1
REASON_ALIGNED = 2
REASON_ACTIVE = 3
REASON_OVERRIDE = 4

FALLBACK_PREVIOUS = 0

_EPS_T = 1e-12


@njit(cache=True, nogil=True)
def rhs(y, kappa, p, out):
    """Right-hand side in the regrouped (modal) form."""
    md = p[0]
    me = p[1]
    nud = p[2]
    nue = p[3]
    ca = p[4]
    cr = p[5]
    cc = p[6]
    dc = p[7]
    d1 = p[8]
    d2 = p[9]
    dx = y[0] - y[2]
    dy = y[1] - y[3]
    r2 = dx * dx + dy * dy
    r = math.sqrt(r2)
    d14 = d1 * d1 * d1 * d1
    radial = -(ca / md) / r2 * (1.0 + (cc / ca * d14 - dc * dc) / r2)
    lateral = kappa * d14 * d2 / (r2 * r) * (cc / md) / r2
    out[0] = y[4]
    out[1] = y[5]
    out[2] = y[6]
    out[3] = y[7]
    out[4] = radial * dx - lateral * dy - nud / md * y[4]
    out[5] = radial * dy + lateral * dx - nud / md * y[5]
    out[6] = -(cr / me) * dx / r2 - nue / me * y[6]
    out[7] = -(cr / me) * dy / r2 - nue / me * y[7]


@njit(cache=True, nogil=True)
def advance(y, kappa, p, h, method, work):
    """Advance ``y`` in place by ``h``. ``work`` is a (5, 8) scratch array."""
    k1 = work[0]
    if method == EULER:
        rhs(y, kappa, p, k1)
        for j in range(8):
            y[j] += h * k1[j]
        return
    k2 = work[1]
    k3 = work[2]
    k4 = work[3]
    tmp = work[4]
    rhs(y, kappa, p, k1)
    for j in range(8):
        tmp[j] = y[j] + 0.5 * h * k1[j]
    rhs(tmp, kappa, p, k2)
    for j in range(8):
        tmp[j] = y[j] + 0.5 * h * k2[j]
    rhs(tmp, kappa, p, k3)
    for j in range(8):
        tmp[j] = y[j] + h * k3[j]
    rhs(tmp, kappa, p, k4)
    for j in range(8):
        y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])


@njit(cache=True, nogil=True)
def _chord_closest(x0, y0, x1, y1, tx, ty):
    """Closest point of the chord (x0,y0)-(x1,y1) to (tx,ty): (s, distance)."""
    ex = x1 - x0
    ey = y1 - y0
    L2 = ex * ex + ey * ey
    s = 0.0
    if L2 > 0.0:
        s = ((tx - x0) * ex + (ty - y0) * ey) / L2
        if s < 0.0:
            s = 0.0
        elif s > 1.0:
            s = 1.0
    px = x0 + s * ex - tx
    py = y0 + s * ey - ty
    return s, math.sqrt(px * px + py * py)


@njit(cache=True, nogil=True)
def _chord_entry(x0, y0, x1, y1, tx, ty, rho):
    """Smallest s in [0,1] with |chord(s) - T| <= rho, or -1."""
    ex = x1 - x0
    ey = y1 - y0
    fx = x0 - tx
    fy = y0 - ty
    c = fx * fx + fy * fy - rho * rho
    if c <= 0.0:
        return 0.0
    a = ex * ex + ey * ey
    if a == 0.0:
        return -1.0
    b = 2.0 * (fx * ex + fy * ey)
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return -1.0
    s = (-b - math.sqrt(disc)) / (2.0 * a)
    if s < 0.0 or s > 1.0:
        return -1.0
    return s


@njit(cache=True, nogil=True)
def alpha(y, tx, ty):
    return (ty - y[3]) * y[6] - (tx - y[2]) * y[7]


@njit(cache=True, nogil=True)
def _grid_count(t0, tf, dt):
    n = int(math.ceil((tf - t0) / dt - 1e-9))
    if n < 1:
        n = 1
    return n


@njit(cache=True, nogil=True)
def _state_ok(y, floor):
    for j in range(8):
        if not math.isfinite(y[j]):
            return STATUS_NONFINITE
    dx = y[0] - y[2]
    dy = y[1] - y[3]
    if math.sqrt(dx * dx + dy * dy) < floor:
        return STATUS_DEGENERATE
    return STATUS_OK


@njit(cache=True, nogil=True)
def integrate_schedule(y0, t0, tf, p, bp_t, bp_k, dt, method, stride,
                       tx, ty, rho, floor, early_exit):
    """Integrate under a piecewise-constant schedule.

    Steps are split at schedule breakpoints so the switching times act
    exactly rather than on the grid. Events are evaluated on every step.

    Returns ``(status, t_end, y, rec_t, rec_y, rec_k, ev)`` where ``ev`` is a
    float array:

    0 min target distance, 1 time of min, 2 t_hit (nan),
    3 t_b (nan), 4 first t > t_b with alpha < 0 (nan),
    5 min target distance after t_b (inf), 6 time of it (nan),
    7 alpha at that time (nan), 8 alpha at t_end,
    9 max separation, 10 min separation, 11 max speed.
    """
    n = _grid_count(t0, tf, dt)
    nrec = n // stride + 2
    rec_t = np.empty(nrec)
    rec_y = np.empty((nrec, 8))
    rec_k = np.empty(nrec, dtype=np.int64)
    ev = np.empty(12)
    work = np.empty((5, 8))
    y = y0.copy()
    yp = np.empty(8)
    nbp = bp_t.shape[0]

    seg = 0
    while seg + 1 < nbp and bp_t[seg + 1] <= t0:
        seg += 1

    d0 = math.sqrt((y[2] - tx) ** 2 + (y[3] - ty) ** 2)
    ev[0] = d0
    ev[1] = t0
    ev[2] = np.nan
    if d0 < rho:
        ev[2] = t0
    ev[3] = np.nan
    ev[4] = np.nan
    ev[5] = np.inf
    ev[6] = np.nan
    ev[7] = np.nan
    r0 = math.sqrt((y[0] - y[2]) ** 2 + (y[1] - y[3]) ** 2)
    ev[9] = r0
    ev[10] = r0
    ev[11] = max(math.hypot(y[4], y[5]), math.hypot(y[6], y[7]))

    status = _state_ok(y, floor)
    nr = 0
    rec_t[0] = t0
    rec_y[0] = y
    rec_k[0] = int(bp_k[seg])
    nr = 1
    t = t0
    i = 0
    if status != STATUS_OK:
        ev[8] = alpha(y, tx, ty)
        return status, t, y, rec_t[:nr], rec_y[:nr], rec_k[:nr], ev

    while t < tf - _EPS_T:
        t_next = t0 + (i + 1) * dt
        if t_next > tf - _EPS_T * max(1.0, abs(tf)):
            t_next = tf
        for j in range(8):
            yp[j] = y[j]
        ta = t
        while True:
            nb = np.inf
            if seg + 1 < nbp:
                nb = bp_t[seg + 1]
            tb = min(nb, t_next)
            h = tb - ta
            if h > 0.0:
                advance(y, bp_k[seg], p, h, method, work)
            ta = tb
            if nb <= t_next:
                seg += 1
            if ta >= t_next:
                break
        h_step = t_next - t
        i += 1

        status = _state_ok(y, floor)
        if status != STATUS_OK:
            t = t_next
            break

        # target distance along the chord
        s, d = _chord_closest(yp[2], yp[3], y[2], y[3], tx, ty)
        tc = t + s * h_step
        if d < ev[0]:
            ev[0] = d
            ev[1] = tc
        hit_now = False
        if math.isnan(ev[2]):
            se = _chord_entry(yp[2], yp[3], y[2], y[3], tx, ty, rho)
            if se >= 0.0:
                ev[2] = t + se * h_step
                hit_now = True

        # turn-back and alignment test
        if math.isnan(ev[3]):
            if y[6] < 0.0:
                den = yp[6] - y[6]
                frac = 1.0
                if den > 0.0 and yp[6] >= 0.0:
                    frac = yp[6] / den
                ev[3] = t + frac * h_step
        else:
            if d < ev[5]:
                ev[5] = d
                ev[6] = tc
                # alpha at the interpolated closest point
                al0 = alpha(yp, tx, ty)
                al1 = alpha(y, tx, ty)
                ev[7] = al0 + s * (al1 - al0)
            if math.isnan(ev[4]):
                al1 = alpha(y, tx, ty)
                if al1 < 0.0:
                    al0 = alpha(yp, tx, ty)
                    frac = 1.0
                    if al0 >= 0.0 and al0 - al1 > 0.0:
                        frac = al0 / (al0 - al1)
                    ev[4] = t + frac * h_step

        r = math.sqrt((y[0] - y[2]) ** 2 + (y[1] - y[3]) ** 2)
        if r > ev[9]:
            ev[9] = r
        if r < ev[10]:
            ev[10] = r
        sp = max(math.hypot(y[4], y[5]), math.hypot(y[6], y[7]))
        if sp > ev[11]:
            ev[11] = sp

        t = t_next
        stop = hit_now and early_exit
        if i % stride == 0 or t >= tf - _EPS_T or stop:
            rec_t[nr] = t
            rec_y[nr] = y
            # value in force from t onward
            kk = seg
            while kk + 1 < nbp and bp_t[kk + 1] <= t:
                kk += 1
            rec_k[nr] = int(bp_k[kk])
            nr += 1
        if stop:
            break

    if status != STATUS_OK:
        rec_t[nr] = t
        rec_y[nr] = y
        rec_k[nr] = int(bp_k[seg])
        nr += 1
    ev[8] = alpha(y, tx, ty)
    return status, t, y, rec_t[:nr], rec_y[:nr], rec_k[:nr], ev


@njit(cache=True, nogil=True)
def law(y, p, tx, ty, a_bar, far_factor, prev_sign, fallback):
    """Feedback law. Returns (kappa, reason, a, same_side)."""
    dx = y[0] - y[2]
    dy = y[1] - y[3]
    r2 = dx * dx + dy * dy
    r3 = r2 * math.sqrt(r2)
    a = (tx - y[0]) * (y[1] - y[3]) + (ty - y[1]) * (y[2] - y[0])
    ss = (y[2] - tx) * (y[2] - y[0]) + (y[3] - ty) * (y[3] - y[1])
    if r3 > far_factor * p[9]:
        return 0, REASON_FAR, a, ss
    if abs(a) <= a_bar and ss < 0.0:
        return 0, REASON_ALIGNED, a, ss
    if a > 0.0:
        return 1, REASON_ACTIVE, a, ss
    if a < 0.0:
        return -1, REASON_ACTIVE, a, ss
    if fallback == FALLBACK_PREVIOUS:
        return prev_sign, REASON_ACTIVE, a, ss
    return fallback, REASON_ACTIVE, a, ss


@njit(cache=True, nogil=True)
def integrate_feedback(y0, t0, tf, p, targets, dt, method, stride, floor,
                       a_bar, far_factor, fallback, sample_period,
                       ov_t0, ov_t1, ov_k, rho_reach, stop_on_arrival):
    """Integrate under the feedback law, following ``targets`` in order.

    The active target advances when the evader comes within ``rho_reach``.
    With ``sample_period > 0`` the law is held between samples taken at
    ``t0 + k * sample_period``; otherwise it is evaluated on every step.

    Returns ``(status, t_end, y, rec_t, rec_y, rec_k, tr, hits, ev)`` where
    ``tr`` rows are ``(t, kappa, reason, a, same_side, r, target_index)``,
    ``hits`` rows are ``(target_index, t)`` and ``ev`` is
    ``(min distance to final target, its time, max r, min r, max speed)``.
    """
    n = _grid_count(t0, tf, dt)
    nrec = n // stride + 2
    rec_t = np.empty(nrec)
    rec_y = np.empty((nrec, 8))
    rec_k = np.empty(nrec, dtype=np.int64)
    ntg = targets.shape[0]
    hits = np.empty((ntg, 2))
    nh = 0
    cap = 64
    tr = np.empty((cap, 7))
    ntr = 0
    ev = np.empty(5)
    work = np.empty((5, 8))
    y = y0.copy()
    yp = np.empty(8)
    nov = ov_t0.shape[0]

    cur = 0
    tx = targets[0, 0]
    ty = targets[0, 1]
    ev[0] = math.sqrt((y[2] - targets[ntg - 1, 0]) ** 2 + (y[3] - targets[ntg - 1, 1]) ** 2)
    ev[1] = t0
    r0 = math.sqrt((y[0] - y[2]) ** 2 + (y[1] - y[3]) ** 2)
    ev[2] = r0
    ev[3] = r0
    ev[4] = max(math.hypot(y[4], y[5]), math.hypot(y[6], y[7]))

    kappa = 0
    prev_sign = 1
    next_sample = t0
    k_samp = 0
    t = t0
    i = 0
    nr = 0
    status = _state_ok(y, floor)
    first = True
    done = False

    while status == STATUS_OK:
        # arrival checks at the current time
        while cur < ntg:
            dcur = math.sqrt((y[2] - targets[cur, 0]) ** 2 + (y[3] - targets[cur, 1]) ** 2)
            if dcur < rho_reach:
                hits[nh, 0] = cur
                hits[nh, 1] = t
                nh += 1
                cur += 1
            else:
                break
        if cur < ntg:
            tx = targets[cur, 0]
            ty = targets[cur, 1]
        if (cur >= ntg and stop_on_arrival) or t >= tf - _EPS_T:
            done = True

        if not done:
            in_ov = False
            kov = 0
            for q in range(nov):
                if ov_t0[q] - _EPS_T <= t < ov_t1[q] - _EPS_T:
                    in_ov = True
                    kov = int(ov_k[q])
            if in_ov:
                newk = kov
                reason = REASON_OVERRIDE
                dx = y[0] - y[2]
                dy = y[1] - y[3]
                a = (tx - y[0]) * (y[1] - y[3]) + (ty - y[1]) * (y[2] - y[0])
                ss = (y[2] - tx) * (y[2] - y[0]) + (y[3] - ty) * (y[3] - y[1])
                next_sample = t
            elif sample_period <= 0.0 or t >= next_sample - 1e-9 * sample_period:
                newk, reason, a, ss = law(y, p, tx, ty, a_bar, far_factor, prev_sign, fallback)
                if sample_period > 0.0:
                    while t0 + k_samp * sample_period <= t + 1e-9 * sample_period:
                        k_samp += 1
                    next_sample = t0 + k_samp * sample_period
            else:
                newk = kappa
                reason = -1
                a = 0.0
                ss = 0.0
            if newk != kappa or first:
                if ntr == cap:
                    cap *= 2
                    grown = np.empty((cap, 7))
                    grown[:ntr] = tr[:ntr]
                    tr = grown
                dx = y[0] - y[2]
                dy = y[1] - y[3]
                tr[ntr, 0] = t
                tr[ntr, 1] = newk
                tr[ntr, 2] = REASON_INITIAL if first else reason
                tr[ntr, 3] = a
                tr[ntr, 4] = ss
                tr[ntr, 5] = math.sqrt(dx * dx + dy * dy)
                tr[ntr, 6] = cur
                ntr += 1
                kappa = newk
                first = False
            if kappa != 0:
                prev_sign = kappa
        else:
            if first:
                tr[0, 0] = t
                tr[0, 1] = 0
                tr[0, 2] = REASON_INITIAL
                tr[0, 3] = 0.0
                tr[0, 4] = 0.0
                tr[0, 5] = math.sqrt((y[0] - y[2]) ** 2 + (y[1] - y[3]) ** 2)
                tr[0, 6] = cur
                ntr = 1
                first = False

        if i % stride == 0 or done:
            rec_t[nr] = t
            rec_y[nr] = y
            rec_k[nr] = kappa
            nr += 1
        if done:
            break

        t_next = t0 + (i + 1) * dt
        if t_next > tf - _EPS_T * max(1.0, abs(tf)):
            t_next = tf
        for j in range(8):
            yp[j] = y[j]
        advance(y, kappa, p, t_next - t, method, work)
        status = _state_ok(y, floor)
        s, d = _chord_closest(yp[2], yp[3], y[2], y[3],
                              targets[ntg - 1, 0], targets[ntg - 1, 1])
        if d < ev[0]:
            ev[0] = d
            ev[1] = t + s * (t_next - t)
        r = math.sqrt((y[0] - y[2]) ** 2 + (y[1] - y[3]) ** 2)
        if r > ev[2]:
            ev[2] = r
        if r < ev[3]:
            ev[3] = r
        sp = max(math.hypot(y[4], y[5]), math.hypot(y[6], y[7]))
        if sp > ev[4]:
            ev[4] = sp
        t = t_next
        i += 1

    if status != STATUS_OK:
        rec_t[nr] = t
        rec_y[nr] = y
        rec_k[nr] = kappa
        nr += 1
    return status, t, y, rec_t[:nr], rec_y[:nr], rec_k[:nr], tr[:ntr], hits[:nh], ev
