"""Hot loops: circulant log-sum-exp (the kernel application inside Sinkhorn).

    out[j] = log sum_i exp(a[i] + logk[(i - j) mod n])

Numba-compiled when available; set ``TORUS_SB_DISABLE_NUMBA=1`` to force the
pure-numpy path (identical results up to round-off).
"""
from __future__ import annotations

import os

import numpy as np
from scipy.special import logsumexp

_DISABLED = os.environ.get("TORUS_SB_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    import numba as nb

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag
    nb = None
    HAVE_NUMBA = False


def circulant_index(n: int) -> np.ndarray:
    """idx[j, i] = (i - j) mod n."""
    return (np.arange(n)[None, :] - np.arange(n)[:, None]) % n


def lse_circulant_rows_numpy(A: np.ndarray, logk: np.ndarray) -> np.ndarray:
    """Row-wise circulant log-sum-exp for A of shape (m, n)."""
    L = logk[circulant_index(logk.size)]  # L[j, i]
    return logsumexp(A[:, None, :] + L[None, :, :], axis=2)


if HAVE_NUMBA:

    @nb.njit(cache=True, fastmath=False)
    def lse_circulant_rows_numba(A, logk):  # pragma: no cover - compiled
        m, n = A.shape
        out = np.empty((m, n))
        buf = np.empty(n)
        for r in range(m):
            for j in range(n):
                mx = -np.inf
                for i in range(n):
                    d = i - j
                    if d < 0:
                        d += n
                    v = A[r, i] + logk[d]
                    buf[i] = v
                    if v > mx:
                        mx = v
                s = 0.0
                for i in range(n):
                    s += np.exp(buf[i] - mx)
                out[r, j] = mx + np.log(s)
        return out

else:
    lse_circulant_rows_numba = None


def lse_circulant_rows(A: np.ndarray, logk: np.ndarray, use_numba: bool | None = None) -> np.ndarray:
    if use_numba is None:
        use_numba = HAVE_NUMBA
    A = np.ascontiguousarray(A, dtype=float)
    if use_numba and HAVE_NUMBA:
        return lse_circulant_rows_numba(A, np.ascontiguousarray(logk, dtype=float))
    return lse_circulant_rows_numpy(A, logk)


def lse_convolve(a: np.ndarray, logk: np.ndarray, use_numba: bool | None = None) -> np.ndarray:
    """log sum_y exp(a(y) + log K(y - x)) for 1D or separable 2D ``a``."""
    if a.ndim == 1:
        return lse_circulant_rows(a[None, :], logk, use_numba)[0]
    # separable kernel: reduce axis 0, then axis 1
    b = lse_circulant_rows(a.T, logk, use_numba).T
    return lse_circulant_rows(b, logk, use_numba)
