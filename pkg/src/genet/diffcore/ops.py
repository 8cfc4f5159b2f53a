"""Elementwise, reduction and shape operations.

Binary elementwise ops accept equal shapes or a scalar (size-1) operand; any
other combination is a :class:`DimensionError`. Channel broadcasting must be
spelled out with :func:`broadcast_to`.
"""

import builtins

import numpy as np

from ..errors import DimensionError
from .tensor import Tensor, make_result


def _lift(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x), dtype=dtype)


def _binary_operands(a, b):
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def _unbroadcast(g, t):
    if g.shape == t.shape:
        return g
    return np.asarray(g.sum()).reshape(t.shape)


def _result_data(d, a, b):
    # Keep the dtype of tensor operands; a scalar tensor operand must not
    # promote a float32 array to float64.
    dtype = a.dtype if a.size >= b.size else b.dtype
    return d.astype(dtype, copy=False)


def add(a, b):
    a, b = _binary_operands(a, b)
    out = _result_data(a.data + b.data, a, b)

    def vjp(g):
        return _unbroadcast(g, a), _unbroadcast(g, b)

    return make_result(out, (a, b), vjp, "add")


def sub(a, b):
    a, b = _binary_operands(a, b)
    out = _result_data(a.data - b.data, a, b)

    def vjp(g):
        return _unbroadcast(g, a), _unbroadcast(-g, b)

    return make_result(out, (a, b), vjp, "sub")


def mul(a, b):
    a, b = _binary_operands(a, b)
    out = _result_data(a.data * b.data, a, b)

    def vjp(g):
        ga = _unbroadcast(g * b.data, a) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b) if b.requires_grad else None
        return ga, gb

    return make_result(out, (a, b), vjp, "mul")


def abs(x):
    x = _lift(x)
    # np.sign(0) == 0 gives the zero subgradient at the kink
    s = np.sign(x.data)

    def vjp(g):
        return (g * s,)

    return make_result(np.abs(x.data), (x,), vjp, "abs")


def relu(x):
    x = _lift(x)
    mask = x.data > 0

    def vjp(g):
        return (g * mask,)

    return make_result(np.maximum(x.data, 0), (x,), vjp, "relu")


def clamp(x, lo=0.0, hi=1.0):
    x = _lift(x)
    inside = (x.data > lo) & (x.data < hi)

    def vjp(g):
        return (g * inside,)

    return make_result(np.clip(x.data, lo, hi), (x,), vjp, "clamp")


def sigmoid(x):
    x = _lift(x)
    y = np.empty_like(x.data)
    pos = x.data >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    y[~pos] = ex / (1.0 + ex)

    def vjp(g):
        return (g * y * (1 - y),)

    return make_result(y, (x,), vjp, "sigmoid")


# -- reductions --------------------------------------------------------------

def sum(x, axis=None):
    x = _lift(x)
    out = np.asarray(x.data.sum(axis=axis, keepdims=axis is not None))

    def vjp(g):
        return (np.broadcast_to(g, x.shape),)

    res = make_result(out if axis is not None else out.reshape(()), (x,), vjp, "sum")
    return res


def mean(x):
    x = _lift(x)
    n = x.size

    def vjp(g):
        return (np.broadcast_to(g / n, x.shape),)

    return make_result(np.asarray(x.data.mean(), dtype=x.dtype), (x,), vjp, "mean")


def l1(x):
    """Sum of absolute values."""
    x = _lift(x)
    s = np.sign(x.data)

    def vjp(g):
        return (g * s,)

    return make_result(np.asarray(np.abs(x.data).sum(), dtype=x.dtype), (x,), vjp, "l1")


def l2(x, axis=None):
    """Euclidean norm, over everything or per slice along ``axis``.

    The gradient at a zero norm is taken as 0.
    """
    x = _lift(x)
    norm = np.sqrt(np.square(x.data).sum(axis=axis, keepdims=True))
    safe = np.where(norm > 0, norm, 1)
    scale = np.where(norm > 0, 1.0 / safe, 0).astype(x.dtype)

    def vjp(g):
        return (g * x.data * scale,)

    out = norm if axis is not None else norm.reshape(())
    return make_result(out.astype(x.dtype, copy=False), (x,), vjp, "l2")


# -- shape ops ---------------------------------------------------------------

def reshape(x, shape):
    x = _lift(x)
    shape = tuple(shape)

    def vjp(g):
        return (g.reshape(x.shape),)

    return make_result(x.data.reshape(shape), (x,), vjp, "reshape")


def _is_basic_index(idx):
    parts = idx if isinstance(idx, tuple) else (idx,)
    return builtins.all(isinstance(p, (int, np.integer, slice)) or p is None or p is Ellipsis for p in parts)


def getitem(x, idx):
    x = _lift(x)

    basic = _is_basic_index(idx)

    def vjp(g):
        full = np.zeros_like(x.data)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return make_result(np.ascontiguousarray(x.data[idx]), (x,), vjp, "getitem")


def concat(tensors, axis=0):
    tensors = [_lift(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_result(np.concatenate([t.data for t in tensors], axis=axis), tensors, vjp, "concat")


def broadcast_to(x, shape):
    """Explicitly replicate ``x`` along its size-1 axes."""
    x = _lift(x)
    shape = tuple(shape)
    if len(shape) != x.ndim or builtins.any(s != d and s != 1 for s, d in zip(x.shape, shape)):
        raise DimensionError(f"cannot broadcast {x.shape} to {shape}")
    axes = tuple(i for i, (s, d) in enumerate(zip(x.shape, shape)) if s != d)

    def vjp(g):
        return (g.sum(axis=axes, keepdims=True),)

    return make_result(np.ascontiguousarray(np.broadcast_to(x.data, shape)), (x,), vjp, "broadcast_to")


def matmul(a, b):
    a, b = _lift(a), _lift(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def vjp(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return make_result(a.data @ b.data, (a, b), vjp, "matmul")


def elementwise(op, a, b=None, lo=0.0, hi=1.0):
    """Dispatch by name: ``add``, ``sub``, ``mul``, ``abs``, ``relu``, ``clamp``."""
    if op in ("add", "sub", "mul"):
        if b is None:
            raise DimensionError(f"{op} needs two operands")
        return {"add": add, "sub": sub, "mul": mul}[op](a, b)
    if op == "abs":
        return abs(a)
    if op == "relu":
        return relu(a)
    if op == "clamp":
        return clamp(a, lo, hi)
    raise ValueError(f"unknown elementwise op {op!r}")


def reduce(op, x):
    """Dispatch by name: ``sum``, ``mean``, ``l1``, ``l2``."""
    return {"sum": sum, "mean": mean, "l1": l1, "l2": l2}[op](x)
