"""Layers with explicit forward/backward passes.

Sequence layers take ``(T, C)`` for a single example or ``(B, T, C)`` for a
batch; the output keeps the same rank. Dense layers take ``(n,)`` or
``(B, n)``. Backward functions return gradients in the same layout as the
corresponding forward inputs.
"""

from __future__ import annotations

import numpy as np

from . import _kernels as K


class ShapeError(ValueError):
    """Operand shapes do not satisfy a layer's geometry."""


def _as_batch(x):
    x = np.asarray(x)
    if x.ndim == 2:
        return x[None], True
    if x.ndim != 3:
        raise ShapeError(f"expected (T, C) or (B, T, C), got shape {x.shape}")
    return x, False


def gaussian_init(shape, std: float, seed: int) -> np.ndarray:
    if not std > 0:
        raise ValueError("std must be positive")
    return np.random.default_rng(seed).normal(0.0, std, size=shape)


# -- embedding -------------------------------------------------------------


def embedding_forward(ids, table: np.ndarray) -> np.ndarray:
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(
            f"embedding index out of range [0, {table.shape[0]}): "
            f"min={ids.min()}, max={ids.max()}"
        )
    return table[ids]


def embedding_backward(ids, dout: np.ndarray, vocab_size: int) -> np.ndarray:
    """Gradient w.r.t. the table; repeated ids accumulate into one row."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim == 1:
        ids, dout = ids[None], dout[None]
    return K.embed_bwd(ids, dout, vocab_size)


# -- temporal convolution --------------------------------------------------


def conv1d_forward(x, kernels: np.ndarray, bias: np.ndarray):
    """Valid stride-1 convolution along time.

    ``kernels`` has shape ``(F, K, E)``: ``out[t, f] = bias[f] +
    sum_{k,e} x[t+k, e] * kernels[f, k, e]``. Returns ``(out, cache)``.
    """
    xb, single = _as_batch(x)
    f, k, e = kernels.shape
    b, t, ex = xb.shape
    if ex != e:
        raise ShapeError(f"conv1d: input width {ex} != kernel width {e}")
    if t < k:
        raise ShapeError(f"conv1d: sequence length {t} < kernel size {k}")
    cols = K.unfold(xb, k)  # (B, To, k*E)
    out = cols @ kernels.reshape(f, k * e).T + bias
    cache = (cols, t, single)
    return (out[0] if single else out), cache


def conv1d_backward(dout, cache, kernels: np.ndarray):
    """Returns ``(dx, dkernels, dbias)``."""
    cols, t, single = cache
    f, k, e = kernels.shape
    d = dout[None] if single else dout
    dk = (d.reshape(-1, f).T @ cols.reshape(-1, k * e)).reshape(f, k, e)
    db = d.sum(axis=(0, 1))
    dcols = d @ kernels.reshape(f, k * e)
    dx = K.fold_add(dcols, k, t)
    return (dx[0] if single else dx), dk, db


# -- pooling ---------------------------------------------------------------


def pool_out_len(t: int, window: int, stride: int) -> int:
    return (t - window) // stride + 1


def maxpool1d(x, window: int, stride: int):
    """Max over time windows. Returns ``(out, argmax)``; ties pick the first."""
    if window < 1 or stride < 1:
        raise ShapeError("pool window and stride must be >= 1")
    xb, single = _as_batch(x)
    if xb.shape[1] < window:
        raise ShapeError(f"maxpool1d: sequence length {xb.shape[1]} < window {window}")
    out, idx = K.maxpool_fwd(xb, window, stride)
    if single:
        return out[0], idx[0]
    return out, idx


def maxpool1d_backward(dout, argmax, t: int):
    single = np.ndim(dout) == 2
    d = dout[None] if single else dout
    a = argmax[None] if single else argmax
    dx = K.maxpool_bwd(d, a, t)
    return dx[0] if single else dx


def global_maxpool(x):
    """Column maxima over the whole time axis: ``(T, F) -> (F,)``."""
    xb, single = _as_batch(x)
    t = xb.shape[1]
    if t < 1:
        raise ShapeError("global_maxpool: empty sequence")
    out, idx = K.maxpool_fwd(xb, t, t)
    out, idx = out[:, 0, :], idx[:, 0, :]
    if single:
        return out[0], idx[0]
    return out, idx


def global_maxpool_backward(dout, argmax, t: int):
    single = np.ndim(dout) == 1
    d = (dout[None] if single else dout)[:, None, :]
    a = (argmax[None] if single else argmax)[:, None, :]
    dx = K.maxpool_bwd(np.ascontiguousarray(d), np.ascontiguousarray(a), t)
    return dx[0] if single else dx


# -- dense -----------------------------------------------------------------


def dense(x, w: np.ndarray, b: np.ndarray):
    x = np.asarray(x)
    if x.shape[-1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ShapeError(
            f"dense: x{x.shape}, W{w.shape}, b{b.shape} do not agree"
        )
    return x @ w.T + b


def dense_backward(dout, x, w: np.ndarray):
    """Returns ``(dx, dW, db)``."""
    dx = dout @ w
    if np.ndim(x) == 1:
        return dx, np.outer(dout, x), np.array(dout, copy=True)
    return dx, dout.T @ x, dout.sum(axis=0)


# -- activations, dropout, loss -------------------------------------------


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(dout, x):
    return dout * (x > 0)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def dropout(x, rate: float, train: bool, rng: np.random.Generator | None = None):
    """Inverted dropout. Returns ``(out, mask)``; ``mask`` is None at inference."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("train-mode dropout needs a generator")
    mask = (rng.random(np.shape(x)) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


_LOG_FLOOR = 1e-12


def bce_loss(logit, y):
    """Binary cross-entropy of ``sigmoid(logit)`` against ``y``.

    Returns ``(loss, dloss/dlogit)``, elementwise; the gradient is ``p - y``.
    Probabilities are clamped at 1e-12 inside the logarithms.
    """
    p = sigmoid(logit)
    y = np.asarray(y, dtype=np.float64)
    loss = -(
        y * np.log(np.maximum(p, _LOG_FLOOR))
        + (1.0 - y) * np.log(np.maximum(1.0 - p, _LOG_FLOOR))
    )
    return loss, p - y
