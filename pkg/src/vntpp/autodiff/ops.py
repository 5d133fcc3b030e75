"""Differentiable primitives.

Broadcasting rules: ``add``, ``sub``, ``mul`` and ``masked_fill`` follow numpy
broadcasting and reduce gradients back to each input's shape. ``matmul``
takes ``[..., m, n] @ [..., n, p]`` (batch dims broadcast) or a 2-d right
operand. Everything else is shape-preserving or documented per function.
"""

from __future__ import annotations

import builtins

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, as_tensor, make


def _data(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a, b, op):
    try:
        return np.broadcast_shapes(np.shape(a), np.shape(b))
    except ValueError:
        raise ShapeError(f"{op}: shapes {np.shape(a)} and {np.shape(b)} do not broadcast") from None


def add(a, b) -> Tensor:
    x, y = _data(a), _data(b)
    _check_broadcast(x, y, "add")
    sx, sy = x.shape, y.shape
    return make(x + y, (a, b), lambda g: (_unbroadcast(g, sx), _unbroadcast(g, sy)), "add")


def sub(a, b) -> Tensor:
    x, y = _data(a), _data(b)
    _check_broadcast(x, y, "sub")
    sx, sy = x.shape, y.shape
    return make(x - y, (a, b), lambda g: (_unbroadcast(g, sx), _unbroadcast(-g, sy)), "sub")


def mul(a, b) -> Tensor:
    x, y = _data(a), _data(b)
    _check_broadcast(x, y, "mul")

    def vjp(g):
        return _unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)

    return make(x * y, (a, b), vjp, "mul")


def matmul(a, b) -> Tensor:
    x, y = _data(a), _data(b)
    if x.ndim < 2 or y.ndim < 2 or x.shape[-1] != y.shape[-2]:
        raise ShapeError(f"matmul: shapes {x.shape} and {y.shape} are incompatible")

    if y.ndim == 2:
        # one flat GEMM instead of a stacked loop over the leading axes
        x2 = x.reshape(-1, x.shape[-1])
        out = (x2 @ y).reshape(x.shape[:-1] + (y.shape[1],))

        def vjp(g):
            g2 = g.reshape(-1, g.shape[-1])
            return (g2 @ y.T).reshape(x.shape), x2.T @ g2

        return make(out, (a, b), vjp, "matmul")

    def vjp(g):
        gx = _unbroadcast(g @ np.swapaxes(y, -1, -2), x.shape)
        gy = _unbroadcast(np.swapaxes(x, -1, -2) @ g, y.shape)
        return gx, gy

    return make(x @ y, (a, b), vjp, "matmul")


def concat(tensors, axis: int = 0) -> Tensor:
    arrays = [_data(t) for t in tensors]
    try:
        out = np.concatenate(arrays, axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[a.shape for a in arrays]} on axis {axis}") from None
    bounds = np.cumsum([a.shape[axis] for a in arrays])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make(out, tuple(tensors), vjp, "concat")


def _is_basic(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (builtins.slice, int, np.integer, type(None), type(Ellipsis))) for i in items)


def slice(x, idx) -> Tensor:
    """``x[idx]`` for basic slices or integer-array indexing."""
    d = _data(x)
    basic = _is_basic(idx)
    try:
        out = d[idx]
    except IndexError as exc:
        raise ShapeError(f"slice: {exc} for shape {d.shape}") from None

    def vjp(g):
        gx = np.zeros_like(d)
        if basic:
            gx[idx] += g
        else:
            np.add.at(gx, idx, g)
        return (gx,)

    return make(np.array(out, dtype=np.float64), (x,), vjp, "slice")


def transpose(x, axes=None) -> Tensor:
    d = _data(x)
    if axes is None:
        axes = tuple(range(d.ndim))[::-1]
    if sorted(axes) != list(range(d.ndim)):
        raise ShapeError(f"transpose: bad axes {axes} for shape {d.shape}")
    inv = np.argsort(axes)
    return make(np.transpose(d, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def reshape(x, shape) -> Tensor:
    d = _data(x)
    try:
        out = d.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {d.shape} into {shape}") from None
    return make(out, (x,), lambda g: (g.reshape(d.shape),), "reshape")


def embedding_lookup(table, idx) -> Tensor:
    """Rows of ``table`` ([V, D]) at integer ``idx`` (any shape); result ``idx.shape + (D,)``."""
    t = _data(table)
    idx = np.asarray(idx)
    if t.ndim != 2:
        raise ShapeError(f"embedding_lookup: table must be 2-d, got {t.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= t.shape[0]):
        raise IndexError(f"embedding index out of range [0, {t.shape[0]})")

    def vjp(g):
        gt = np.zeros_like(t)
        np.add.at(gt, idx.reshape(-1), g.reshape(-1, t.shape[1]))
        return (gt,)

    return make(t[idx], (table,), vjp, "embedding_lookup")


def softmax(x) -> Tensor:
    d = _data(x)
    e = np.exp(d - d.max(axis=-1, keepdims=True))
    y = e / e.sum(axis=-1, keepdims=True)
    return make(y, (x,), lambda g: (y * (g - (g * y).sum(axis=-1, keepdims=True)),), "softmax")


def log_softmax(x) -> Tensor:
    d = _data(x)
    shifted = d - d.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    y = shifted - lse
    p = np.exp(y)
    return make(y, (x,), lambda g: (g - p * g.sum(axis=-1, keepdims=True),), "log_softmax")


def _sigmoid(d):
    return np.exp(-np.logaddexp(0.0, -d))


def softplus(x) -> Tensor:
    d = _data(x)
    y = np.log1p(np.exp(-np.abs(d))) + np.maximum(d, 0.0)
    return make(y, (x,), lambda g: (g * _sigmoid(d),), "softplus")


def exp(x) -> Tensor:
    y = np.exp(_data(x))
    return make(y, (x,), lambda g: (g * y,), "exp")


def log(x) -> Tensor:
    d = _data(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(d)
    return make(y, (x,), lambda g: (g / d,), "log")


def relu(x) -> Tensor:
    d = _data(x)
    return make(np.maximum(d, 0.0), (x,), lambda g: (g * (d > 0),), "relu")


def layer_norm(x, gamma=None, beta=None, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply the optional affine ``gamma``/``beta``."""
    d = _data(x)
    n = d.shape[-1]
    mu = d.mean(axis=-1, keepdims=True)
    xc = d - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gm = None if gamma is None else _data(gamma)
    y = xhat if gm is None else xhat * gm
    if beta is not None:
        y = y + _data(beta)

    def vjp(g):
        dxhat = g if gm is None else g * gm
        dx = inv / n * (n * dxhat - dxhat.sum(axis=-1, keepdims=True) - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        dg = None if gamma is None else (g * xhat).sum(axis=lead)
        db = None if beta is None else g.sum(axis=lead)
        return dx, dg, db

    return make(y, (x, gamma, beta), vjp, "layer_norm")


def dropout(x, keep_prob: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: identity in eval mode, kept entries scaled by ``1/keep_prob`` in train mode."""
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError("keep_prob must be in (0, 1]")
    if not train or keep_prob == 1.0:
        return as_tensor(x)
    d = _data(x)
    if rng is None:
        rng = np.random.default_rng()
    scale = (rng.random(d.shape) < keep_prob) / keep_prob
    return make(d * scale, (x,), lambda g: (g * scale,), "dropout")


def sum(x, axis=None, keepdims: bool = False) -> Tensor:
    d = _data(x)
    out = d.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, d.shape).copy(),)

    return make(np.asarray(out, dtype=np.float64), (x,), vjp, "sum")


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    d = _data(x)
    count = d.size if axis is None else int(np.prod([d.shape[a] for a in np.atleast_1d(axis)]))
    out = d.mean(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, d.shape).copy(),)

    return make(np.asarray(out, dtype=np.float64), (x,), vjp, "mean")


def masked_fill(x, mask, value: float) -> Tensor:
    """Replace entries where ``mask`` is True by ``value`` (mask broadcasts to ``x``)."""
    d = _data(x)
    m = np.broadcast_to(np.asarray(mask, dtype=bool), d.shape)
    return make(np.where(m, value, d), (x,), lambda g: (np.where(m, 0.0, g),), "masked_fill")


def custom(inputs: tuple, value, vjp, name: str = "custom") -> Tensor:
    """Register an externally computed value with a hand-written VJP.

    ``vjp(g)`` must return one gradient (or None) per entry of ``inputs``.
    """
    return make(np.asarray(value, dtype=np.float64), tuple(inputs), vjp, name)
