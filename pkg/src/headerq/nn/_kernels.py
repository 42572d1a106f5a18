"""Gather/scatter kernels behind the convolution, pooling and embedding layers.

Two implementations exist for every kernel: numba-compiled loops and a pure
numpy path. The active one is chosen at import time; set
``HEADERQ_DISABLE_NUMBA=1`` to force numpy (or run without numba installed).
Both are importable directly via :data:`NUMPY_KERNELS` / :data:`NUMBA_KERNELS`
for benchmarking and cross-checking.

All arrays are batch-first: ``(batch, time, channels)``.
"""

from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

_FLAG = os.environ.get("HEADERQ_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


# --------------------------------------------------------------------------
# numpy path


def unfold_np(x, k):
    """``(B, T, E)`` -> ``(B, T-k+1, k*E)``; row ``t`` is ``x[t:t+k]`` flattened."""
    b, t, e = x.shape
    win = sliding_window_view(x, k, axis=1)  # (B, T-k+1, E, k)
    return np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(b, t - k + 1, k * e)


def fold_add_np(cols, k, t):
    b, to, ke = cols.shape
    e = ke // k
    c = cols.reshape(b, to, k, e)
    out = np.zeros((b, t, e), dtype=cols.dtype)
    for j in range(k):
        out[:, j : j + to, :] += c[:, :, j, :]
    return out


def maxpool_fwd_np(x, w, s):
    b, t, f = x.shape
    win = sliding_window_view(x, w, axis=1)[:, ::s]  # (B, To, F, w)
    arg = np.argmax(win, axis=3)  # first occurrence on ties
    out = np.take_along_axis(win, arg[..., None], axis=3)[..., 0]
    to = out.shape[1]
    idx = arg + (np.arange(to) * s)[None, :, None]
    return np.ascontiguousarray(out), idx.astype(np.int64)


def maxpool_bwd_np(dout, idx, t):
    b, to, f = dout.shape
    dx = np.zeros((b, t, f), dtype=dout.dtype)
    bi = np.arange(b)[:, None, None]
    fi = np.arange(f)[None, None, :]
    np.add.at(dx, (bi, idx, fi), dout)
    return dx


def embed_bwd_np(ids, dout, v):
    e = dout.shape[-1]
    grad = np.zeros((v, e), dtype=dout.dtype)
    np.add.at(grad, ids.reshape(-1), dout.reshape(-1, e))
    return grad


NUMPY_KERNELS = {
    "unfold": unfold_np,
    "fold_add": fold_add_np,
    "maxpool_fwd": maxpool_fwd_np,
    "maxpool_bwd": maxpool_bwd_np,
    "embed_bwd": embed_bwd_np,
}


# --------------------------------------------------------------------------
# numba path

if HAVE_NUMBA:

    @njit(cache=True)
    def _unfold_nb(x, k):
        b, t, e = x.shape
        to = t - k + 1
        out = np.empty((b, to, k * e), dtype=x.dtype)
        for n in range(b):
            for i in range(to):
                for j in range(k):
                    for c in range(e):
                        out[n, i, j * e + c] = x[n, i + j, c]
        return out

    @njit(cache=True)
    def _fold_add_nb(cols, k, t):
        b, to, ke = cols.shape
        e = ke // k
        out = np.zeros((b, t, e), dtype=cols.dtype)
        for n in range(b):
            for j in range(k):
                for i in range(to):
                    for c in range(e):
                        out[n, i + j, c] += cols[n, i, j * e + c]
        return out

    @njit(cache=True)
    def _maxpool_fwd_nb(x, w, s):
        b, t, f = x.shape
        to = (t - w) // s + 1
        out = np.empty((b, to, f), dtype=x.dtype)
        idx = np.empty((b, to, f), dtype=np.int64)
        for n in range(b):
            for i in range(to):
                start = i * s
                for c in range(f):
                    best = x[n, start, c]
                    arg = start
                    for j in range(start + 1, start + w):
                        if x[n, j, c] > best:
                            best = x[n, j, c]
                            arg = j
                    out[n, i, c] = best
                    idx[n, i, c] = arg
        return out, idx

    @njit(cache=True)
    def _maxpool_bwd_nb(dout, idx, t):
        b, to, f = dout.shape
        dx = np.zeros((b, t, f), dtype=dout.dtype)
        for n in range(b):
            for i in range(to):
                for c in range(f):
                    dx[n, idx[n, i, c], c] += dout[n, i, c]
        return dx

    @njit(cache=True)
    def _embed_bwd_nb(ids, dout, v):
        b, t, e = dout.shape
        grad = np.zeros((v, e), dtype=dout.dtype)
        for n in range(b):
            for i in range(t):
                row = ids[n, i]
                for c in range(e):
                    grad[row, c] += dout[n, i, c]
        return grad

    def unfold_nb(x, k):
        return _unfold_nb(np.ascontiguousarray(x), k)

    def fold_add_nb(cols, k, t):
        return _fold_add_nb(np.ascontiguousarray(cols), k, t)

    def maxpool_fwd_nb(x, w, s):
        return _maxpool_fwd_nb(np.ascontiguousarray(x), w, s)

    def maxpool_bwd_nb(dout, idx, t):
        return _maxpool_bwd_nb(
            np.ascontiguousarray(dout), np.ascontiguousarray(idx), t
        )

    def embed_bwd_nb(ids, dout, v):
        return _embed_bwd_nb(
            np.ascontiguousarray(ids, dtype=np.int64), np.ascontiguousarray(dout), v
        )

    NUMBA_KERNELS = {
        "unfold": unfold_nb,
        "fold_add": fold_add_nb,
        "maxpool_fwd": maxpool_fwd_nb,
        "maxpool_bwd": maxpool_bwd_nb,
        "embed_bwd": embed_bwd_nb,
    }
else:  # pragma: no cover
    NUMBA_KERNELS = {}

ACTIVE = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS
BACKEND = "numba" if USE_NUMBA else "numpy"

unfold = ACTIVE["unfold"]
fold_add = ACTIVE["fold_add"]
maxpool_fwd = ACTIVE["maxpool_fwd"]
maxpool_bwd = ACTIVE["maxpool_bwd"]
embed_bwd = ACTIVE["embed_bwd"]
