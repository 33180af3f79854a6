"""Hot inner loops with a numba path and a pure-numpy fallback.

Set ``LAIS_DISABLE_NUMBA=1`` in the environment (before import) to force the
numpy path. Both paths must agree to round-off; ``tests/test_kernels.py``
checks this.
"""
import os

import numpy as np

_DISABLED = os.environ.get("LAIS_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError("numba disabled by LAIS_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def _thomas_numpy(diag, off, rhs):
    # Vectorized over the batch axis; the recurrence runs along the node axis.
    B, N = diag.shape
    out = np.empty_like(rhs)
    cp = np.empty((B, N))
    denom = diag[:, 0].copy()
    if np.any(denom == 0.0):
        raise ZeroDivisionError("zero pivot in tridiagonal solve")
    if N > 1:
        cp[:, 0] = off[:, 0] / denom
    out[:, 0, :] = rhs[:, 0, :] / denom[:, None]
    for i in range(1, N):
        denom = diag[:, i] - off[:, i - 1] * cp[:, i - 1]
        if np.any(denom == 0.0):
            raise ZeroDivisionError("zero pivot in tridiagonal solve")
        if i < N - 1:
            cp[:, i] = off[:, i] / denom
        out[:, i, :] = (rhs[:, i, :] - off[:, i - 1, None] * out[:, i - 1, :]) / denom[:, None]
    for i in range(N - 2, -1, -1):
        out[:, i, :] -= cp[:, i, None] * out[:, i + 1, :]
    return out


if HAVE_NUMBA:

    @njit(cache=True)
    def _thomas_numba(diag, off, rhs):
        B, N = diag.shape
        K = rhs.shape[2]
        out = np.empty_like(rhs)
        cp = np.empty(N)
        for b in range(B):
            denom = diag[b, 0]
            if denom == 0.0:
                raise ZeroDivisionError("zero pivot in tridiagonal solve")
            if N > 1:
                cp[0] = off[b, 0] / denom
            for k in range(K):
                out[b, 0, k] = rhs[b, 0, k] / denom
            for i in range(1, N):
                denom = diag[b, i] - off[b, i - 1] * cp[i - 1]
                if denom == 0.0:
                    raise ZeroDivisionError("zero pivot in tridiagonal solve")
                if i < N - 1:
                    cp[i] = off[b, i] / denom
                for k in range(K):
                    out[b, i, k] = (rhs[b, i, k] - off[b, i - 1] * out[b, i - 1, k]) / denom
            for i in range(N - 2, -1, -1):
                for k in range(K):
                    out[b, i, k] -= cp[i] * out[b, i + 1, k]
        return out


def thomas_solve(diag, off, rhs, use_numba=None):
    """Solve a batch of symmetric tridiagonal systems.

    Parameters
    ----------
    diag : (B, N) array
        Main diagonals.
    off : (B, N-1) array
        Off-diagonals (sub = super for symmetric systems).
    rhs : (B, N, K) array
        K right-hand sides per system; the factorization is shared.
    use_numba : bool, optional
        Override the module default (``HAVE_NUMBA``).
    """
    diag = np.ascontiguousarray(diag, dtype=np.float64)
    off = np.ascontiguousarray(off, dtype=np.float64)
    rhs = np.ascontiguousarray(rhs, dtype=np.float64)
    if use_numba is None:
        use_numba = HAVE_NUMBA
    if use_numba and HAVE_NUMBA:
        return _thomas_numba(diag, off, rhs)
    return _thomas_numpy(diag, off, rhs)
