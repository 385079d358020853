"""Compiled inner loops shared by the finite, mean-field and Picard runs.

Model families are passed as ``(kind, params)``:

    KIND_REFERENCE  params = [q, kappa, cap, f_min, f_max, psi0]
    KIND_CONSTANT   params = [q, b0, lam, psi0]
"""
import numpy as np
from numba import njit

KIND_REFERENCE = 0
KIND_CONSTANT = 1

MODE_FINITE = 0
MODE_MEAN_FIELD = 1
MODE_PICARD = 2

STATUS_OK = 0
STATUS_NONFINITE = 1


@njit(cache=True)
def a_scalar(x, q):
    ax = abs(x)
    c2 = 0.5 * q * abs(q - 1.0)
    c1 = q + 2.0 * c2
    if ax <= 1.0:
        v = c1 * ax - c2 * ax * ax
    else:
        v = ax ** q + (q + c2 - 1.0)
    return v if x >= 0.0 else -v


@njit(cache=True)
def tree_sum(buf, n):
    """Pairwise-tree sum of ``buf[:n]``; overwrites ``buf``.

    The pairing depends only on ``n``, so the result is bitwise
    reproducible for a given input order.
    """
    if n == 0:
        return 0.0
    while n > 1:
        half = n // 2
        for i in range(half):
            buf[i] = buf[2 * i] + buf[2 * i + 1]
        if n % 2 == 1:
            buf[half] = buf[n - 1]
            n = half + 1
        else:
            n = half
    return buf[0]


@njit(cache=True)
def rate_scalar(kind, p, x):
    if kind == KIND_REFERENCE:
        return p[3] + (p[4] - p[3]) * (1.0 - np.exp(-a_scalar(x, p[0])))
    return p[2]


@njit(cache=True)
def jump_scalar(kind, p, x):
    if kind == KIND_REFERENCE:
        return p[5] / (1.0 + a_scalar(x, p[0]))
    return p[3]


@njit(cache=True)
def capped_scalar(kind, p, x):
    if kind == KIND_REFERENCE:
        v = a_scalar(x, p[0])
        return v if v < p[2] else p[2]
    return 0.0


@njit(cache=True)
def mean_rate(kind, p, x, buf):
    n = x.shape[0]
    for i in range(n):
        buf[i] = rate_scalar(kind, p, x[i])
    return tree_sum(buf, n) / n


@njit(cache=True)
def mean_capped(kind, p, x, buf):
    n = x.shape[0]
    if kind != KIND_REFERENCE:
        return 0.0
    for i in range(n):
        buf[i] = capped_scalar(kind, p, x[i])
    return tree_sum(buf, n) / n


@njit(cache=True)
def euler_step(kind, p, x, dt, v, buf, frozen_mean, use_frozen):
    """One explicit Euler step of the drift ODE; returns the clamp count."""
    n = x.shape[0]
    if kind == KIND_REFERENCE:
        for i in range(n):
            v[i] = capped_scalar(kind, p, x[i])
        if use_frozen:
            m = frozen_mean
        else:
            for i in range(n):
                buf[i] = v[i]
            m = tree_sum(buf, n) / n
        kappa = p[1]
        for i in range(n):
            x[i] += dt * kappa * (m - v[i])
    else:
        b0 = p[1]
        if b0 != 0.0:
            for i in range(n):
                x[i] += dt * b0
    clamps = 0
    for i in range(n):
        if x[i] < 0.0:
            x[i] = 0.0
            clamps += 1
    return clamps


@njit(cache=True)
def run_kernel(x, atom_s, atom_j, atom_z, atom_u, atom_slot, n_slots, n_sub, delta,
               kind, p, mode, collateral_scale, inv_alpha, d_s, frozen_muf, frozen_mud,
               tracked):
    N = x.shape[0]
    h = delta / n_sub
    n_atoms = atom_s.shape[0]
    n_track = tracked.shape[0]

    slot_states = np.empty((n_slots + 1, N))
    accepted = np.zeros(n_atoms, dtype=np.bool_)
    live_coll = np.zeros(n_slots + 1)
    obs_muf = np.empty(n_slots)
    obs_mud = np.empty(n_slots)
    max_stops = n_atoms + n_slots * (n_sub + 1) + 1
    tr_t = np.empty(max_stops)
    tr_x = np.empty((max_stops, n_track))
    v = np.empty(N)
    buf = np.empty(N)

    clamps = 0
    steps = 0
    status = STATUS_OK
    stops = 0
    t = 0.0
    a_ptr = 0
    coll = 0.0

    tr_t[0] = 0.0
    for r in range(n_track):
        tr_x[0, r] = x[tracked[r]]
    stops = 1

    picard = mode == MODE_PICARD
    k_done = 0
    for k in range(n_slots):
        for i in range(N):
            slot_states[k, i] = x[i]
        live_coll[k] = coll
        obs_muf[k] = mean_rate(kind, p, x, buf)
        obs_mud[k] = mean_capped(kind, p, x, buf)
        fm = frozen_mud[k] if picard else 0.0
        slot_start = k * delta
        for m in range(n_sub):
            last = m == n_sub - 1
            t_end = (k + 1) * delta if last else slot_start + (m + 1) * h
            while a_ptr < n_atoms and atom_slot[a_ptr] == k and (last or atom_s[a_ptr] <= t_end):
                s = atom_s[a_ptr]
                if s > t:
                    clamps += euler_step(kind, p, x, s - t, v, buf, fm, picard)
                    steps += 1
                    t = s
                j = atom_j[a_ptr]
                xj = x[j]
                if atom_z[a_ptr] <= rate_scalar(kind, p, xj):
                    accepted[a_ptr] = True
                    jump = jump_scalar(kind, p, xj)
                    if mode == MODE_FINITE:
                        c = atom_u[a_ptr] * collateral_scale
                        for i in range(N):
                            x[i] += c
                        coll += c
                    x[j] = xj + jump
                    tr_t[stops] = t
                    for r in range(n_track):
                        tr_x[stops, r] = x[tracked[r]]
                    stops += 1
                a_ptr += 1
            if t_end > t:
                clamps += euler_step(kind, p, x, t_end - t, v, buf, fm, picard)
                steps += 1
            t = t_end
            tr_t[stops] = t
            for r in range(n_track):
                tr_x[stops, r] = x[tracked[r]]
            stops += 1
        if mode != MODE_FINITE:
            integrand = frozen_muf[k] if picard else obs_muf[k]
            c = integrand ** inv_alpha * d_s[k]
            for i in range(N):
                x[i] += c
            tr_t[stops] = t
            for r in range(n_track):
                tr_x[stops, r] = x[tracked[r]]
            stops += 1
        k_done = k + 1
        for i in range(N):
            if not np.isfinite(x[i]):
                status = STATUS_NONFINITE
        if status != STATUS_OK:
            break
    for i in range(N):
        slot_states[k_done, i] = x[i]
    live_coll[k_done] = coll
    return (slot_states, accepted, live_coll, obs_muf, obs_mud, tr_t[:stops], tr_x[:stops],
            clamps, steps, status, k_done)


@njit(cache=True)
def rate_array(kind, p, x):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = rate_scalar(kind, p, x[i])
    return out
