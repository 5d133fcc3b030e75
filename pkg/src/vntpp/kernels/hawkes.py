"""Hot loops for Hawkes processes: thinning, log-likelihood gradients, grid intensities.

Every public function dispatches to a compiled kernel or to a numpy path
depending on :func:`vntpp._accel.use_numba`. Both paths consume identical
inputs (including pre-drawn uniforms) so they agree to rounding; the thinning
fallback is the same loop run by the interpreter, the other fallbacks are
vectorized with pairwise distance matrices.

Kernel codes: ``0`` exponential ``f(s) = p1 * exp(-p1 s)``, ``1`` gaussian
density with center ``p1`` and width ``p2``.
"""

from __future__ import annotations

import math

import numpy as np

from .._accel import njit, use_numba

EXPONENTIAL = 0
GAUSSIAN = 1

_SQRT_2PI = math.sqrt(2.0 * math.pi)

# status codes returned by the simulators
OK = 0
OUT_OF_UNIFORMS = 1
CAP_EXCEEDED = 2


# --------------------------------------------------------------------------
# thinning
# --------------------------------------------------------------------------


def _simulate_exp_loop(mu, a, beta, horizon, u, cap, types_out, times_out):
    K = mu.shape[0]
    S = np.zeros(K)
    base = 0.0
    for k in range(K):
        base += mu[k]
    t = 0.0
    n = 0
    p = 0
    lam_bar = base
    nu = u.shape[0]
    while True:
        if p + 3 > nu:
            return n, p, OUT_OF_UNIFORMS
        w = -math.log(1.0 - u[p]) / lam_bar
        p += 1
        t += w
        if t > horizon:
            return n, p, OK
        decay = math.exp(-beta * w)
        lam_t = base
        for k in range(K):
            S[k] *= decay
            lam_t += S[k]
        accept = u[p] * lam_bar <= lam_t
        p += 1
        if accept:
            if n >= cap:
                return n, p, CAP_EXCEEDED
            target = u[p] * lam_t
            p += 1
            chosen = K - 1
            cum = 0.0
            for k in range(K):
                cum += mu[k] + S[k]
                if target < cum:
                    chosen = k
                    break
            types_out[n] = chosen
            times_out[n] = t
            n += 1
            for k in range(K):
                S[k] += a[k, chosen] * beta
        lam_bar = base
        for k in range(K):
            lam_bar += S[k]


def _gauss(s, center, width):
    z = (s - center) / width
    return math.exp(-0.5 * z * z) / (width * _SQRT_2PI)


def _gauss_sup(s0, s1, center, width):
    # supremum of the (causal) gaussian kernel over [s0, s1]
    if s1 < 0.0:
        return 0.0
    if s0 < 0.0:
        s0 = 0.0
    if center < s0:
        return _gauss(s0, center, width)
    if center > s1:
        return _gauss(s1, center, width)
    return 1.0 / (width * _SQRT_2PI)


def _simulate_gauss_loop(mu, a, center, width, horizon, u, cap, types_out, times_out):
    K = mu.shape[0]
    base = 0.0
    for k in range(K):
        base += mu[k]
    col = np.zeros(K)  # total excitation weight of a source type
    for j in range(K):
        for k in range(K):
            col[j] += a[k, j]
    window = width
    t = 0.0
    n = 0
    p = 0
    nu = u.shape[0]
    lam_k = np.zeros(K)
    while t < horizon:
        if p + 3 > nu:
            return n, p, OUT_OF_UNIFORMS
        t_w = min(t + window, horizon)
        bound = base
        for j in range(n):
            bound += col[types_out[j]] * _gauss_sup(t - times_out[j], t_w - times_out[j], center, width)
        cand = t - math.log(1.0 - u[p]) / bound
        p += 1
        if cand > t_w:
            t = t_w
            continue
        t = cand
        lam_t = 0.0
        for k in range(K):
            lam_k[k] = mu[k]
        for j in range(n):
            f = _gauss(t - times_out[j], center, width)
            src = types_out[j]
            for k in range(K):
                lam_k[k] += a[k, src] * f
        for k in range(K):
            lam_t += lam_k[k]
        accept = u[p] * bound <= lam_t
        p += 1
        if accept:
            if n >= cap:
                return n, p, CAP_EXCEEDED
            target = u[p] * lam_t
            p += 1
            chosen = K - 1
            cum = 0.0
            for k in range(K):
                cum += lam_k[k]
                if target < cum:
                    chosen = k
                    break
            types_out[n] = chosen
            times_out[n] = t
            n += 1
    return n, p, OK


_gauss_nb = njit(_gauss)


@njit
def _gauss_sup_nb(s0, s1, center, width):
    if s1 < 0.0:
        return 0.0
    if s0 < 0.0:
        s0 = 0.0
    if center < s0:
        return _gauss_nb(s0, center, width)
    if center > s1:
        return _gauss_nb(s1, center, width)
    return 1.0 / (width * _SQRT_2PI)

_simulate_exp_nb = njit(_simulate_exp_loop)


@njit
def _simulate_gauss_nb(mu, a, center, width, horizon, u, cap, types_out, times_out):
    # numba cannot call the python-level helpers, so this mirrors
    # _simulate_gauss_loop with the compiled helpers.
    K = mu.shape[0]
    base = 0.0
    for k in range(K):
        base += mu[k]
    col = np.zeros(K)
    for j in range(K):
        for k in range(K):
            col[j] += a[k, j]
    window = width
    t = 0.0
    n = 0
    p = 0
    nu = u.shape[0]
    lam_k = np.zeros(K)
    while t < horizon:
        if p + 3 > nu:
            return n, p, OUT_OF_UNIFORMS
        t_w = min(t + window, horizon)
        bound = base
        for j in range(n):
            bound += col[types_out[j]] * _gauss_sup_nb(t - times_out[j], t_w - times_out[j], center, width)
        cand = t - math.log(1.0 - u[p]) / bound
        p += 1
        if cand > t_w:
            t = t_w
            continue
        t = cand
        lam_t = 0.0
        for k in range(K):
            lam_k[k] = mu[k]
        for j in range(n):
            f = _gauss_nb(t - times_out[j], center, width)
            src = types_out[j]
            for k in range(K):
                lam_k[k] += a[k, src] * f
        for k in range(K):
            lam_t += lam_k[k]
        accept = u[p] * bound <= lam_t
        p += 1
        if accept:
            if n >= cap:
                return n, p, CAP_EXCEEDED
            target = u[p] * lam_t
            p += 1
            chosen = K - 1
            cum = 0.0
            for k in range(K):
                cum += lam_k[k]
                if target < cum:
                    chosen = k
                    break
            types_out[n] = chosen
            times_out[n] = t
            n += 1
    return n, p, OK


def thin(kind, mu, a, p1, p2, horizon, u, cap):
    """Run Ogata thinning on the uniform stream ``u``.

    Returns ``(types, times, status)``; ``status`` is one of ``OK``,
    ``OUT_OF_UNIFORMS`` (caller retries with a longer stream) or
    ``CAP_EXCEEDED``.
    """
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    a = np.ascontiguousarray(a, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    size = min(cap, u.shape[0] // 2 + 1) + 1
    types_out = np.empty(size, dtype=np.int64)
    times_out = np.empty(size, dtype=np.float64)
    cap_eff = min(cap, size - 1)
    if kind == EXPONENTIAL:
        fn = _simulate_exp_nb if use_numba() else _simulate_exp_loop
        n, _, status = fn(mu, a, float(p1), float(horizon), u, cap_eff, types_out, times_out)
    else:
        fn = _simulate_gauss_nb if use_numba() else _simulate_gauss_loop
        n, _, status = fn(mu, a, float(p1), float(p2), float(horizon), u, cap_eff, types_out, times_out)
    if status == CAP_EXCEEDED and cap_eff < cap:
        status = OUT_OF_UNIFORMS
    return types_out[:n].copy(), times_out[:n].copy(), status


# --------------------------------------------------------------------------
# intensity on a sorted grid
# --------------------------------------------------------------------------


@njit
def _grid_intensity_nb(types, times, grid, mu, a, kind, p1, p2, right):
    n = grid.shape[0]
    K = mu.shape[0]
    L = times.shape[0]
    out = np.empty((n, K))
    if kind == 0:
        E = np.zeros(K)
        t_state = 0.0
        j = 0
        for g in range(n):
            tg = grid[g]
            while j < L and (times[j] < tg or (right and times[j] == tg)):
                d = math.exp(-p1 * (times[j] - t_state))
                for k in range(K):
                    E[k] = E[k] * d + a[k, types[j]] * p1
                t_state = times[j]
                j += 1
            d = math.exp(-p1 * (tg - t_state))
            for k in range(K):
                out[g, k] = mu[k] + E[k] * d
    else:
        for g in range(n):
            tg = grid[g]
            for k in range(K):
                out[g, k] = mu[k]
            for j in range(L):
                s = tg - times[j]
                if s < 0.0 or (s == 0.0 and not right):
                    break
                f = _gauss_nb(s, p1, p2)
                for k in range(K):
                    out[g, k] += a[k, types[j]] * f
    return out


def _kernel_values(kind, s, p1, p2):
    if kind == EXPONENTIAL:
        return p1 * np.exp(-p1 * s)
    z = (s - p1) / p2
    return np.exp(-0.5 * z * z) / (p2 * _SQRT_2PI)


def _grid_intensity_np(types, times, grid, mu, a, kind, p1, p2, right):
    s = grid[:, None] - times[None, :]
    valid = s >= 0.0 if right else s > 0.0
    f = np.where(valid, _kernel_values(kind, np.where(valid, s, 0.0), p1, p2), 0.0)
    return mu[None, :] + f @ a[:, types].T


def grid_intensity(types, times, grid, mu, a, kind, p1, p2=1.0, right=True):
    """Per-type intensity at each point of ``grid``.

    ``right=True`` counts events at exactly the grid time (right-continuous
    path); ``right=False`` gives the left limit. The compiled exponential
    path sweeps the grid once, so an unsorted grid is sorted first and the
    rows are put back in the caller's order.
    """
    types = np.ascontiguousarray(types, dtype=np.int64)
    times = np.ascontiguousarray(times, dtype=np.float64)
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    a = np.ascontiguousarray(a, dtype=np.float64)
    if not use_numba():
        return _grid_intensity_np(types, times, grid, mu, a, int(kind), float(p1), float(p2), bool(right))
    order = None
    if grid.size > 1 and np.any(grid[1:] < grid[:-1]):
        order = np.argsort(grid, kind="stable")
        grid = grid[order]
    out = _grid_intensity_nb(types, times, grid, mu, a, int(kind), float(p1), float(p2), bool(right))
    if order is None:
        return out
    back = np.empty_like(out)
    back[order] = out
    return back


# --------------------------------------------------------------------------
# compensator increments (time-rescaled gaps)
# --------------------------------------------------------------------------


@njit
def _exp_increments_nb(types, times, mu, a, beta):
    L = times.shape[0]
    K = mu.shape[0]
    base = 0.0
    for k in range(K):
        base += mu[k]
    col = np.zeros(K)
    for j in range(K):
        for k in range(K):
            col[j] += a[k, j]
    out = np.empty(L)
    R = 0.0  # sum over past events of col[type] * exp(-beta (t - t_j)), at t_prev
    t_prev = 0.0
    for i in range(L):
        dt = times[i] - t_prev
        decay = math.exp(-beta * dt)
        out[i] = base * dt + R * (1.0 - decay)
        R = R * decay + col[types[i]]
        t_prev = times[i]
    return out


def _exp_increments_np(types, times, mu, a, beta):
    col = a.sum(axis=0)
    prev = np.concatenate(([0.0], times[:-1]))
    dt = times - prev
    # excitation mass of event j landing in interval i (j < i)
    lo = prev[:, None] - times[None, :]
    hi = times[:, None] - times[None, :]
    past = lo >= 0.0
    past &= np.arange(len(times))[None, :] < np.arange(len(times))[:, None]
    contrib = np.where(past, np.exp(-beta * np.where(past, lo, 0.0)) - np.exp(-beta * np.where(past, hi, 0.0)), 0.0)
    return mu.sum() * dt + contrib @ col[types]


@njit
def _interval_trapezoid_nb(types, times, mu, a, kind, p1, p2, n_sub):
    L = times.shape[0]
    K = mu.shape[0]
    out = np.zeros(L)
    col = np.zeros(K)
    for j in range(K):
        for k in range(K):
            col[j] += a[k, j]
    mu_tot = 0.0
    for k in range(K):
        mu_tot += mu[k]
    t_prev = 0.0
    for i in range(L):
        h = (times[i] - t_prev) / (n_sub - 1)
        acc = 0.0
        for q in range(n_sub):
            t = t_prev + q * h
            lam = mu_tot
            for j in range(i):
                s = t - times[j]
                if kind == 0:
                    f = p1 * math.exp(-p1 * s)
                else:
                    f = _gauss_nb(s, p1, p2)
                lam += col[types[j]] * f
            w = 0.5 if (q == 0 or q == n_sub - 1) else 1.0
            acc += w * lam
        out[i] = acc * h
        t_prev = times[i]
    return out


def _interval_trapezoid_np(types, times, mu, a, kind, p1, p2, n_sub):
    L = len(times)
    out = np.zeros(L)
    col = a.sum(axis=0)
    t_prev = 0.0
    w = np.ones(n_sub)
    w[0] = w[-1] = 0.5
    for i in range(L):
        pts = np.linspace(t_prev, times[i], n_sub)
        lam = np.full(n_sub, mu.sum())
        if i:
            s = pts[:, None] - times[None, :i]
            lam = lam + _kernel_values(kind, s, p1, p2) @ col[types[:i]]
        h = (times[i] - t_prev) / (n_sub - 1)
        out[i] = h * (w @ lam)
        t_prev = times[i]
    return out


def compensator_increments(types, times, mu, a, kind, p1, p2=1.0, n_sub=257):
    """Integrated total intensity over each interval ``(t_{i-1}, t_i]`` with ``t_{-1} = 0``.

    Exact for the exponential kernel; trapezoid with ``n_sub`` points per
    interval for the gaussian kernel.
    """
    types = np.ascontiguousarray(types, dtype=np.int64)
    times = np.ascontiguousarray(times, dtype=np.float64)
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    a = np.ascontiguousarray(a, dtype=np.float64)
    if kind == EXPONENTIAL:
        fn = _exp_increments_nb if use_numba() else _exp_increments_np
        return fn(types, times, mu, a, float(p1))
    fn = _interval_trapezoid_nb if use_numba() else _interval_trapezoid_np
    return fn(types, times, mu, a, int(kind), float(p1), float(p2), int(n_sub))


# --------------------------------------------------------------------------
# log-likelihood with gradients (MLE baselines)
# --------------------------------------------------------------------------


@njit
def _exp_loglik_nb(types, times, offsets, horizons, mu, a, beta):
    K = mu.shape[0]
    ll = 0.0
    dmu = np.zeros(K)
    da = np.zeros((K, K))
    dbeta = 0.0
    R = np.zeros(K)
    S = np.zeros(K)
    n_seq = offsets.shape[0] - 1
    for b in range(n_seq):
        lo = offsets[b]
        hi = offsets[b + 1]
        T = horizons[b]
        for k in range(K):
            R[k] = 0.0
            S[k] = 0.0
        t_prev = 0.0
        for i in range(lo, hi):
            t = times[i]
            dt = t - t_prev
            decay = math.exp(-beta * dt)
            for k in range(K):
                S[k] = decay * (S[k] + dt * R[k])
                R[k] = decay * R[k]
            ki = types[i]
            lam = mu[ki]
            for k in range(K):
                lam += beta * a[ki, k] * R[k]
            ll += math.log(lam)
            inv = 1.0 / lam
            dmu[ki] += inv
            for k in range(K):
                da[ki, k] += beta * R[k] * inv
                dbeta += a[ki, k] * (R[k] - beta * S[k]) * inv
            R[ki] += 1.0
            t_prev = t
        for k in range(K):
            ll -= mu[k] * T
            dmu[k] -= T
        for i in range(lo, hi):
            s = T - times[i]
            e = math.exp(-beta * s)
            src = types[i]
            for k in range(K):
                ll -= a[k, src] * (1.0 - e)
                da[k, src] -= 1.0 - e
                dbeta -= a[k, src] * s * e
    return ll, dmu, da, dbeta


def _exp_loglik_np(types, times, offsets, horizons, mu, a, beta):
    K = mu.shape[0]
    ll = 0.0
    dmu = np.zeros(K)
    da = np.zeros((K, K))
    dbeta = 0.0
    for b in range(len(offsets) - 1):
        ty = types[offsets[b] : offsets[b + 1]]
        tm = times[offsets[b] : offsets[b + 1]]
        T = horizons[b]
        L = len(tm)
        s = tm[:, None] - tm[None, :]
        lower = np.tril(np.ones((L, L), dtype=bool), -1)
        e = np.where(lower, np.exp(-beta * np.where(lower, s, 0.0)), 0.0)
        a_pair = a[ty[:, None], ty[None, :]]
        lam = mu[ty] + beta * (a_pair * e).sum(axis=1)
        inv = 1.0 / lam
        ll += np.log(lam).sum()
        dmu += np.bincount(ty, weights=inv, minlength=K)
        rows = np.broadcast_to(ty[:, None], (L, L))
        cols = np.broadcast_to(ty[None, :], (L, L))
        np.add.at(da, (rows[lower], cols[lower]), (beta * e * inv[:, None])[lower])
        dbeta += ((a_pair * (e - beta * s * e)).sum(axis=1) * inv).sum()
        tail = T - tm
        et = np.exp(-beta * tail)
        ll -= mu.sum() * T
        dmu -= T
        src_mass = np.bincount(ty, weights=1.0 - et, minlength=K)
        ll -= (a * src_mass[None, :]).sum()
        da -= src_mass[None, :]
        dbeta -= (a.sum(axis=0)[ty] * tail * et).sum()
    return ll, dmu, da, dbeta


def exp_loglik(types, times, offsets, horizons, mu, a, beta):
    """Total exponential-kernel Hawkes log-likelihood over concatenated sequences.

    Returns ``(loglik, d/dmu, d/da, d/dbeta)``.
    """
    args = (
        np.ascontiguousarray(types, dtype=np.int64),
        np.ascontiguousarray(times, dtype=np.float64),
        np.ascontiguousarray(offsets, dtype=np.int64),
        np.ascontiguousarray(horizons, dtype=np.float64),
        np.ascontiguousarray(mu, dtype=np.float64),
        np.ascontiguousarray(a, dtype=np.float64),
        float(beta),
    )
    fn = _exp_loglik_nb if use_numba() else _exp_loglik_np
    ll, dmu, da, dbeta = fn(*args)
    return float(ll), dmu, da, float(dbeta)


@njit
def _gauss_loglik_nb(types, times, offsets, horizons, mu, a, center, width, u):
    # u: [n_intervals_total, M]; sequence b owns rows offsets[b] + b .. offsets[b+1] + b.
    # History terms further than center + 10 width back are below e^-50 and skipped.
    K = mu.shape[0]
    M = u.shape[1]
    ll = 0.0
    dmu = np.zeros(K)
    da = np.zeros((K, K))
    dc = 0.0
    dw = 0.0
    w2 = width * width
    reach = center + 10.0 * width
    f0 = np.zeros(K)
    f1 = np.zeros(K)
    f2 = np.zeros(K)
    n_seq = offsets.shape[0] - 1
    for b in range(n_seq):
        lo = offsets[b]
        hi = offsets[b + 1]
        T = horizons[b]
        for i in range(lo, hi):
            ki = types[i]
            lam = mu[ki]
            for j in range(i - 1, lo - 1, -1):
                sj = times[i] - times[j]
                if sj > reach:
                    break
                lam += a[ki, types[j]] * _gauss_nb(sj, center, width)
            inv = 1.0 / lam
            ll += math.log(lam)
            dmu[ki] += inv
            for j in range(i - 1, lo - 1, -1):
                sj = times[i] - times[j]
                if sj > reach:
                    break
                f = _gauss_nb(sj, center, width)
                aij = a[ki, types[j]]
                d = sj - center
                da[ki, types[j]] += f * inv
                dc += aij * f * d / w2 * inv
                dw += aij * f * (d * d / (w2 * width) - 1.0 / width) * inv
        for k in range(K):
            ll -= mu[k] * T
            dmu[k] -= T
        # monte carlo over the excitation part, one row of u per interval;
        # f0/f1/f2 collect sum f, sum f*d, sum f*d^2 per source type
        for k in range(K):
            f0[k] = 0.0
            f1[k] = 0.0
            f2[k] = 0.0
        row = lo + b
        t_prev = 0.0
        for i in range(lo, hi + 1):
            t_next = T if i == hi else times[i]
            span = t_next - t_prev
            for m in range(M):
                t = t_prev + span * u[row, m]
                for j in range(i - 1, lo - 1, -1):
                    sj = t - times[j]
                    if sj > reach:
                        break
                    f = _gauss_nb(sj, center, width) * span / M
                    d = sj - center
                    src = types[j]
                    f0[src] += f
                    f1[src] += f * d
                    f2[src] += f * d * d
            row += 1
            t_prev = t_next
        for src in range(K):
            for k in range(K):
                ll -= a[k, src] * f0[src]
                da[k, src] -= f0[src]
                dc -= a[k, src] * f1[src] / w2
                dw -= a[k, src] * (f2[src] / (w2 * width) - f0[src] / width)
    return ll, dmu, da, dc, dw


def _gauss_loglik_np(types, times, offsets, horizons, mu, a, center, width, u):
    K = mu.shape[0]
    M = u.shape[1]
    ll = 0.0
    dmu = np.zeros(K)
    da = np.zeros((K, K))
    dc = 0.0
    dw = 0.0
    w2 = width * width
    col = a.sum(axis=0)
    for b in range(len(offsets) - 1):
        ty = types[offsets[b] : offsets[b + 1]]
        tm = times[offsets[b] : offsets[b + 1]]
        T = horizons[b]
        L = len(tm)
        s = tm[:, None] - tm[None, :]
        lower = np.tril(np.ones((L, L), dtype=bool), -1)
        f = np.where(lower, _kernel_values(GAUSSIAN, s, center, width), 0.0)
        a_pair = a[ty[:, None], ty[None, :]]
        lam = mu[ty] + (a_pair * f).sum(axis=1)
        inv = 1.0 / lam
        ll += np.log(lam).sum()
        dmu += np.bincount(ty, weights=inv, minlength=K)
        rows = np.broadcast_to(ty[:, None], (L, L))
        cols = np.broadcast_to(ty[None, :], (L, L))
        np.add.at(da, (rows[lower], cols[lower]), (f * inv[:, None])[lower])
        dfc = f * (s - center) / w2
        dfw = f * ((s - center) ** 2 / (w2 * width) - 1.0 / width)
        dc += ((a_pair * dfc).sum(axis=1) * inv).sum()
        dw += ((a_pair * dfw).sum(axis=1) * inv).sum()
        ll -= mu.sum() * T
        dmu -= T
        ub = u[offsets[b] + b : offsets[b + 1] + b + 1]
        edges = np.concatenate(([0.0], tm, [T]))
        span = np.diff(edges)
        pts = edges[:-1, None] + span[:, None] * ub  # [L+1, M]
        sp = pts[:, :, None] - tm[None, None, :]
        # events strictly before the interval start feed interval i
        feed = np.arange(L)[None, :] < np.arange(L + 1)[:, None]
        fk = np.where(feed[:, None, :], _kernel_values(GAUSSIAN, sp, center, width), 0.0)
        wgt = (span / M)[:, None, None]
        fw = fk * wgt
        mass = fw.sum(axis=(0, 1))  # per source event
        ll -= (col[ty] * mass).sum()
        da -= np.bincount(ty, weights=mass, minlength=K)[None, :]
        gc = (fw * (sp - center) / w2).sum(axis=(0, 1))
        gw = (fw * ((sp - center) ** 2 / (w2 * width) - 1.0 / width)).sum(axis=(0, 1))
        dc -= (col[ty] * gc).sum()
        dw -= (col[ty] * gw).sum()
    return ll, dmu, da, dc, dw


def gauss_loglik(types, times, offsets, horizons, mu, a, center, width, u):
    """Gaussian-kernel Hawkes log-likelihood with a Monte Carlo compensator.

    The baseline part of the compensator is exact; the excitation part uses
    the uniforms ``u`` (one row of ``M`` draws per interval, ``L + 1``
    intervals per sequence including the tail up to the horizon).
    Returns ``(loglik, d/dmu, d/da, d/dcenter, d/dwidth)``.
    """
    args = (
        np.ascontiguousarray(types, dtype=np.int64),
        np.ascontiguousarray(times, dtype=np.float64),
        np.ascontiguousarray(offsets, dtype=np.int64),
        np.ascontiguousarray(horizons, dtype=np.float64),
        np.ascontiguousarray(mu, dtype=np.float64),
        np.ascontiguousarray(a, dtype=np.float64),
        float(center),
        float(width),
        np.ascontiguousarray(u, dtype=np.float64),
    )
    fn = _gauss_loglik_nb if use_numba() else _gauss_loglik_np
    ll, dmu, da, dc, dw = fn(*args)
    return float(ll), dmu, da, float(dc), float(dw)
