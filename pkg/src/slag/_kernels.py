"""Pointwise kernels shared by the residual evaluators.

Each kernel has a numba version and a plain numpy version.  Setting the
environment variable ``SLAG_NO_NUMBA=1`` (or a failed numba import) selects
the numpy path.  Both paths compute the same quantities with the same
recurrences, so results agree to rounding.
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("SLAG_NO_NUMBA", "0") not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        import numba
    except ImportError:  # pragma: no cover
        USE_NUMBA = False


def _esym_numpy(H):
    # Newton identities: k e_k = sum_{i=1..k} (-1)^{i-1} e_{k-i} p_i, p_i = tr H^i
    m, n, _ = H.shape
    p = np.empty((m, n + 1))
    Hk = H.copy()
    p[:, 1] = np.trace(Hk, axis1=1, axis2=2)
    for i in range(2, n + 1):
        Hk = Hk @ H
        p[:, i] = np.trace(Hk, axis1=1, axis2=2)
    e = np.zeros((m, n + 1))
    e[:, 0] = 1.0
    for k in range(1, n + 1):
        acc = np.zeros(m)
        sgn = 1.0
        for i in range(1, k + 1):
            acc += sgn * e[:, k - i] * p[:, i]
            sgn = -sgn
        e[:, k] = acc / k
    return e


def _im_det_numpy(H):
    e = _esym_numpy(H)
    n = H.shape[1]
    out = np.zeros(H.shape[0])
    sgn = 1.0
    for k in range(1, n + 1, 2):
        out += sgn * e[:, k]
        sgn = -sgn
    return out


if USE_NUMBA:

    @numba.njit(cache=True)
    def _esym_numba(H):
        m, n, _ = H.shape
        e = np.zeros((m, n + 1))
        p = np.empty(n + 1)
        A = np.empty((n, n))
        B = np.empty((n, n))
        for q in range(m):
            for a in range(n):
                for b in range(n):
                    A[a, b] = H[q, a, b]
            tr = 0.0
            for a in range(n):
                tr += A[a, a]
            p[1] = tr
            for i in range(2, n + 1):
                for a in range(n):
                    for b in range(n):
                        s = 0.0
                        for c in range(n):
                            s += A[a, c] * H[q, c, b]
                        B[a, b] = s
                tr = 0.0
                for a in range(n):
                    tr += B[a, a]
                    for b in range(n):
                        A[a, b] = B[a, b]
                p[i] = tr
            e[q, 0] = 1.0
            for k in range(1, n + 1):
                acc = 0.0
                sgn = 1.0
                for i in range(1, k + 1):
                    acc += sgn * e[q, k - i] * p[i]
                    sgn = -sgn
                e[q, k] = acc / k
        return e

    @numba.njit(cache=True)
    def _im_det_numba(H):
        e = _esym_numba(H)
        m, n, _ = H.shape
        out = np.zeros(m)
        for q in range(m):
            sgn = 1.0
            for k in range(1, n + 1, 2):
                out[q] += sgn * e[q, k]
                sgn = -sgn
        return out


def esym_batch(H):
    """Elementary symmetric polynomials e_0..e_n of a stack of n x n matrices."""
    H = np.ascontiguousarray(H, dtype=np.float64)
    if USE_NUMBA:
        return _esym_numba(H)
    return _esym_numpy(H)


def im_det_batch(H):
    """Im det(I + iH) = e_1 - e_3 + e_5 - ... for a stack of matrices."""
    H = np.ascontiguousarray(H, dtype=np.float64)
    if USE_NUMBA:
        return _im_det_numba(H)
    return _im_det_numpy(H)


def esym_batch_numpy(H):
    return _esym_numpy(np.asarray(H, dtype=np.float64))


def im_det_batch_numpy(H):
    return _im_det_numpy(np.asarray(H, dtype=np.float64))
