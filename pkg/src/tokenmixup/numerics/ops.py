"""Differentiable primitives.

Elementwise binary ops broadcast numpy-style and reduce gradients back to the
operand shape; matmul broadcasts only its leading batch dims.
"""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from ..errors import NumericError, ShapeError
from .tensor import Tensor, as_tensor, make_result

_GELU_C = math.sqrt(2.0 / math.pi)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _operands(a, b) -> tuple[Tensor, Tensor]:
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        b = Tensor._wrap(np.asarray(b, dtype=a.dtype))
    return a, b


def _broadcast_shape(a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"cannot broadcast {a.shape} with {b.shape}") from exc


def add(a, b) -> Tensor:
    a, b = _operands(a, b)
    _broadcast_shape(a, b)
    sa, sb = a.shape, b.shape
    return make_result(a.data + b.data, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        b = as_tensor(b)
        a = Tensor._wrap(np.asarray(a, dtype=b.dtype))
    a, b = _operands(a, b)
    _broadcast_shape(a, b)
    sa, sb = a.shape, b.shape
    return make_result(a.data - b.data, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = _operands(a, b)
    _broadcast_shape(a, b)
    ad, bd = a.data, b.data
    return make_result(ad * bd, (a, b),
                       lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
                       "mul")


def div(a, b) -> Tensor:
    a, b = _operands(a, b)
    _broadcast_shape(a, b)
    ad, bd = a.data, b.data
    out = ad / bd
    return make_result(out, (a, b),
                       lambda g: (_unbroadcast(g / bd, ad.shape),
                                  _unbroadcast(-g * out / bd, bd.shape)),
                       "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_result(-a.data, (a,), lambda g: (-g,), "neg")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError as exc:
        raise ShapeError(f"matmul batch dims differ: {a.shape} @ {b.shape}") from exc
    ad, bd = a.data, b.data

    def back(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return make_result(ad @ bd, (a, b), back, "matmul")


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc
    return make_result(out, (a,), lambda g: (g.reshape(src),), "reshape")


def transpose(a, axes: Optional[Sequence[int]] = None) -> Tensor:
    """Permute axes; with no ``axes`` the last two are swapped."""
    a = as_tensor(a)
    if axes is None:
        axes = list(range(a.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_result(np.transpose(a.data, axes), (a,),
                       lambda g: (np.transpose(g, inverse),), "transpose")


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(a, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    shape = a.shape

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return make_result(np.asarray(a.data.sum(axis=axes, keepdims=keepdims)), (a,), back, "sum")


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    shape = a.shape

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, shape).astype(a.dtype),)

    return make_result(np.asarray(a.data.mean(axis=axes, keepdims=keepdims)), (a,), back, "mean")


def _softmax_np(x: np.ndarray, axis: int) -> np.ndarray:
    if np.isnan(x).any():
        raise NumericError("softmax input contains NaN")
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    y = _softmax_np(a.data, axis)

    def back(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_result(y, (a,), back, "softmax")


def softmax_rows(a) -> Tensor:
    """Numerically stable softmax over the last axis."""
    return softmax(a, axis=-1)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    if np.isnan(a.data).any():
        raise NumericError("log_softmax input contains NaN")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def back(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return make_result(out, (a,), back, "log_softmax")


def cross_entropy(logits, targets) -> Tensor:
    """Per-sample soft-target cross-entropy ``-sum(t * log_softmax(logits))``."""
    logits = as_tensor(logits)
    t = targets.data if isinstance(targets, Tensor) else np.asarray(targets)
    t = t.astype(logits.dtype, copy=False)
    if logits.ndim != 2 or t.shape != logits.shape:
        raise ShapeError(f"logits {logits.shape} and targets {t.shape} disagree")
    x = logits.data
    if np.isnan(x).any():
        raise NumericError("cross_entropy logits contain NaN")
    z = x - x.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -(t * logp).sum(axis=1)
    p = np.exp(logp)

    def back(g):
        return (g[:, None] * (p * t.sum(axis=1, keepdims=True) - t),)

    return make_result(loss, (logits,), back, "cross_entropy")


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm affine params must be ({d},), got {gamma.shape}, {beta.shape}")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + np.asarray(eps, dtype=xd.dtype))
    xhat = xc * rstd
    gd = gamma.data
    out = xhat * gd + beta.data
    lead = tuple(range(xd.ndim - 1))

    def back(g):
        dxhat = g * gd
        dx = rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                     - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return make_result(out, (x, gamma, beta), back, "layer_norm")


def gelu(a) -> Tensor:
    """GELU, tanh approximation."""
    a = as_tensor(a)
    x = a.data
    c = np.asarray(_GELU_C, dtype=x.dtype)
    inner = c * (x + 0.044715 * (x * x * x))
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def back(g):
        dinner = c * (1.0 + 3 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return make_result(out.astype(x.dtype, copy=False), (a,), back, "gelu")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError(f"concat shapes differ off-axis: {ref} vs {t.shape}")
    splits = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=ax))

    return make_result(np.concatenate([t.data for t in tensors], axis=ax), tensors, back, "concat")


def take(a, index, axis: int = 0) -> Tensor:
    """Select slices along ``axis``; repeated indices accumulate in backward."""
    a = as_tensor(a)
    idx = np.asarray(index, dtype=np.intp)
    shape = a.shape

    def back(g):
        ga = np.zeros(shape, dtype=g.dtype)
        np.add.at(np.moveaxis(ga, axis, 0), idx, np.moveaxis(g, axis, 0))
        return (ga,)

    return make_result(np.take(a.data, idx, axis=axis), (a,), back, "take")


def gather_tokens(x, index) -> Tensor:
    """Per-instance token gather: ``out[i, k] = x[i, index[i, k]]`` for x of shape (b, n, d)."""
    x = as_tensor(x)
    idx = np.asarray(index, dtype=np.intp)
    if idx.ndim != 2 or idx.shape[0] != x.shape[0]:
        raise ShapeError(f"index {idx.shape} does not match batch of {x.shape}")
    rows = np.arange(x.shape[0])[:, None]
    shape = x.shape

    def back(g):
        gx = np.zeros(shape, dtype=g.dtype)
        np.add.at(gx, (np.broadcast_to(rows, idx.shape), idx), g)
        return (gx,)

    return make_result(x.data[rows, idx], (x,), back, "gather_tokens")


def where(cond, a, b) -> Tensor:
    """``cond ? a : b`` with a constant boolean condition."""
    a, b = as_tensor(a), as_tensor(b)
    c = np.asarray(cond, dtype=bool)
    try:
        np.broadcast_shapes(c.shape, a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"where: cannot broadcast {c.shape}, {a.shape}, {b.shape}") from exc
    sa, sb = a.shape, b.shape

    def back(g):
        zero = np.zeros((), dtype=g.dtype)
        return (_unbroadcast(np.where(c, g, zero), sa), _unbroadcast(np.where(c, zero, g), sb))

    return make_result(np.where(c, a.data, b.data), (a, b), back, "where")


def l2_norm(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    n = np.sqrt((a.data * a.data).sum(axis=axis))

    def back(g):
        safe = np.where(n > 0, n, 1)
        return (np.expand_dims(g / safe, axis) * a.data,)

    return make_result(n, (a,), back, "l2_norm")


__all__ = [
    "add", "sub", "mul", "div", "neg", "matmul", "reshape", "transpose", "sum", "mean",
    "softmax", "softmax_rows", "log_softmax", "cross_entropy", "layer_norm", "gelu",
    "concat", "take", "gather_tokens", "where", "l2_norm",
]
