"""Next-event quadrature on a uniform grid.

All routines integrate on ``t_j = t0 + j * h`` for ``j = 0 .. n-1`` and
return the same four quantities:

    (sum_j w_j (j h) f_j, sum_j w_j f_j, sum_j w_j p_jk f_j  [K], Lambda_end)

The first sum is taken over elapsed time ``t_j - t0`` rather than ``t_j``:
dividing it by the captured mass then gives a waiting-time estimate whose
discretization error does not grow with the grid's starting point, so
``t0`` itself never enters the kernels.

with ``f = lambda * exp(-Lambda)`` and ``p_jk = lambda_k / lambda``. The
cumulative integral ``Lambda`` and the outer weights ``w`` follow the same
scheme: right Riemann (``w_0 = 0``, ``w_j = h``) or trapezoid (``h / 2`` at
the two ends). Scheme codes: 0 right Riemann, 1 trapezoid.
"""

from __future__ import annotations

import math

import numpy as np

from .._accel import njit, use_numba

RIGHT_RIEMANN = 0
TRAPEZOID = 1
SCHEMES = {"right_riemann": RIGHT_RIEMANN, "trapezoid": TRAPEZOID}

LINEAR = 0
EXPONENTIAL = 1


@njit
def _accumulate_nb(lam, h, scheme):
    n, K = lam.shape
    s_t = 0.0
    s_f = 0.0
    s_k = np.zeros(K)
    cum = 0.0
    prev_total = 0.0
    for j in range(n):
        total = 0.0
        for k in range(K):
            total += lam[j, k]
        if j > 0:
            if scheme == 0:
                cum += total * h
            else:
                cum += 0.5 * (total + prev_total) * h
        prev_total = total
        if scheme == 0:
            w = 0.0 if j == 0 else h
        else:
            w = 0.5 * h if (j == 0 or j == n - 1) else h
        if w == 0.0 or total <= 0.0:
            continue
        f = total * math.exp(-cum)
        s_t += w * (j * h) * f
        s_f += w * f
        for k in range(K):
            s_k[k] += w * lam[j, k] / total * f
    return s_t, s_f, s_k, cum


def _accumulate_np(lam, h, scheme):
    n = lam.shape[0]
    total = lam.sum(axis=1)
    steps = total[1:] * h if scheme == RIGHT_RIEMANN else 0.5 * (total[1:] + total[:-1]) * h
    cum = np.concatenate([[0.0], np.cumsum(steps)])
    w = np.full(n, h)
    if scheme == RIGHT_RIEMANN:
        w[0] = 0.0
    else:
        w[0] = w[-1] = 0.5 * h
    f = total * np.exp(-cum)
    t = np.arange(n) * h
    with np.errstate(invalid="ignore", divide="ignore"):
        share = np.where(total[:, None] > 0, lam / total[:, None], 0.0)
    wf = w * f
    return float(wf @ t), float(wf.sum()), wf @ share, float(cum[-1])


def accumulate(lam: np.ndarray, h: float, scheme: int):
    """Quadrature sums for intensities ``lam`` ([n, K]) already evaluated on the grid."""
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    if lam.ndim != 2 or lam.shape[0] < 2:
        raise ValueError("lam must be [n >= 2, K]")
    if use_numba():
        s_t, s_f, s_k, cum = _accumulate_nb(lam, float(h), int(scheme))
        return float(s_t), float(s_f), s_k, float(cum)
    return _accumulate_np(lam, float(h), int(scheme))


@njit
def _head_nb(base, alpha, variant, h, n, scheme):
    K = base.shape[0]
    lam = np.empty((n, K))
    for j in range(n):
        dt = j * h
        for k in range(K):
            if variant == 0:
                x = base[k] - alpha[k] * dt
            else:
                x = base[k] + math.exp(-alpha[k] * dt)
            lam[j, k] = math.log1p(math.exp(-abs(x))) + max(x, 0.0)
    return _accumulate_nb(lam, h, scheme)


def head_grid(base, alpha, variant: int, h: float, n: int) -> np.ndarray:
    """Softplus-head intensities ``[n, K]`` at elapsed times ``j * h``."""
    dt = (np.arange(n) * h)[:, None]
    x = base[None, :] - alpha[None, :] * dt if variant == LINEAR else base[None, :] + np.exp(-alpha[None, :] * dt)
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def head_quadrature(base, alpha, variant: int, h: float, n: int, scheme: int):
    """:func:`accumulate` for a softplus intensity head, fused when numba is on."""
    base = np.ascontiguousarray(base, dtype=np.float64)
    alpha = np.ascontiguousarray(alpha, dtype=np.float64)
    if use_numba():
        s_t, s_f, s_k, cum = _head_nb(base, alpha, int(variant), float(h), int(n), int(scheme))
        return float(s_t), float(s_f), s_k, float(cum)
    return _accumulate_np(head_grid(base, alpha, variant, h, n), float(h), int(scheme))
