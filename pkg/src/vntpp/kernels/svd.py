"""Thin SVD by QR reduction followed by one-sided Jacobi rotations.

For a tall ``N x J`` matrix, ``X = Q R`` (numpy QR) shrinks the problem to
the ``J x J`` factor ``R``, whose columns are then orthogonalized by
pairwise Jacobi rotations until every pair is orthogonal to ``tol``
relative precision. Column norms are the singular values.
"""

from __future__ import annotations

import math

import numpy as np

from .._accel import njit, use_numba


def _jacobi_loop(A, V, tol, max_sweeps):
    n = A.shape[1]
    m = A.shape[0]
    sweeps = 0
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(m):
                    alpha += A[i, p] * A[i, p]
                    beta += A[i, q] * A[i, q]
                    gamma += A[i, p] * A[i, q]
                if gamma == 0.0 or abs(gamma) <= tol * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                for i in range(m):
                    ap = A[i, p]
                    aq = A[i, q]
                    A[i, p] = c * ap - s * aq
                    A[i, q] = s * ap + c * aq
                for i in range(n):
                    vp = V[i, p]
                    vq = V[i, q]
                    V[i, p] = c * vp - s * vq
                    V[i, q] = s * vp + c * vq
        if not rotated:
            break
    return sweeps


_jacobi_nb = njit(_jacobi_loop)


def _jacobi_np(A, V, tol, max_sweeps):
    n = A.shape[1]
    sweeps = 0
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                ap, aq = A[:, p], A[:, q]
                alpha, beta, gamma = ap @ ap, aq @ aq, ap @ aq
                if gamma == 0.0 or abs(gamma) <= tol * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                A[:, [p, q]] = np.column_stack([c * ap - s * aq, s * ap + c * aq])
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p], V[:, q] = c * vp - s * vq, s * vp + c * vq
        if not rotated:
            break
    return sweeps


def jacobi_svd(X, tol: float = 1e-15, max_sweeps: int = 60):
    """``U, s, Vt`` with ``X = U @ diag(s) @ Vt``, ``s`` descending, ``U`` of shape ``[N, min(N, J)]``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("jacobi_svd needs a 2-D matrix")
    transposed = X.shape[0] < X.shape[1]
    if transposed:
        X = X.T
    Q, R = np.linalg.qr(X)
    A = np.ascontiguousarray(R)
    V = np.eye(A.shape[1])
    (_jacobi_nb if use_numba() else _jacobi_np)(A, V, tol, max_sweeps)
    s = np.sqrt((A * A).sum(axis=0))
    order = np.argsort(-s, kind="stable")
    s = s[order]
    A = A[:, order]
    V = V[:, order]
    Ur = np.zeros_like(A)
    nz = s > s[0] * 1e-300 if s.size and s[0] > 0 else np.zeros(s.shape, dtype=bool)
    Ur[:, nz] = A[:, nz] / s[nz]
    U = Q @ Ur
    if transposed:
        return V, s, U.T
    return U, s, V.T
