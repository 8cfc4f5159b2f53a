"""Convolutional and normalization ops on NCHW tensors."""

import numpy as np

from ..errors import DimensionError
from . import kernels
from .ops import _lift
from .tensor import make_result


def _check4(x, name):
    if x.ndim != 4:
        raise DimensionError(f"{name} expects an NCHW tensor, got shape {x.shape}")


def conv_output_size(h, k, stride, pad):
    return (h + 2 * pad - k) // stride + 1


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """Cross-correlation of ``x`` (N,C,H,W) with ``weight`` (O,C,k,k)."""
    x, weight = _lift(x), _lift(weight)
    _check4(x, "conv2d")
    if stride < 1:
        raise DimensionError("stride must be >= 1")
    n, c, h, w = x.shape
    o, cw, k, k2 = weight.shape
    if cw != c or k != k2:
        raise DimensionError(f"weight {weight.shape} incompatible with input {x.shape}")
    ho, wo = conv_output_size(h, k, stride, padding), conv_output_size(w, k, stride, padding)
    if ho <= 0 or wo <= 0:
        raise DimensionError(f"non-positive output size {ho}x{wo}")
    if k == 1 and stride == 1 and padding == 0:
        cols = x.data.transpose(1, 0, 2, 3).reshape(c, n * h * w)
    else:
        cols = kernels.im2col(x.data, k, stride, padding)
    wmat = weight.data.reshape(o, -1)
    out = (wmat @ cols).reshape(o, n, ho, wo)
    if bias is not None:
        bias = _lift(bias)
        out += bias.data.reshape(o, 1, 1, 1)
    out = np.ascontiguousarray(out.transpose(1, 0, 2, 3))
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def vjp(g):
        gmat = g.transpose(1, 0, 2, 3).reshape(o, n * ho * wo)
        gx = gw = gb = None
        if x.requires_grad:
            gcols = wmat.T @ gmat
            if k == 1 and stride == 1 and padding == 0:
                gx = np.ascontiguousarray(gcols.reshape(c, n, h, w).transpose(1, 0, 2, 3))
            else:
                gx = kernels.col2im(gcols, x.shape, k, stride, padding)
        if weight.requires_grad:
            gw = (gmat @ cols.T).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = gmat.sum(axis=1)
        return gx, gw, gb

    return make_result(out, inputs, vjp, "conv2d")


def conv_transpose2d(x, weight, bias=None, stride=1, padding=0):
    """Transposed convolution of ``x`` (N,Cin,H,W) with ``weight`` (Cin,Cout,k,k).

    This is the adjoint of :func:`conv2d` with the same weight tensor.
    """
    x, weight = _lift(x), _lift(weight)
    _check4(x, "conv_transpose2d")
    if stride < 1:
        raise DimensionError("stride must be >= 1")
    n, cin, h, w = x.shape
    cw, cout, k, k2 = weight.shape
    if cw != cin or k != k2:
        raise DimensionError(f"weight {weight.shape} incompatible with input {x.shape}")
    ho = (h - 1) * stride - 2 * padding + k
    wo = (w - 1) * stride - 2 * padding + k
    if ho <= 0 or wo <= 0:
        raise DimensionError(f"non-positive output size {ho}x{wo}")
    xmat = x.data.transpose(1, 0, 2, 3).reshape(cin, n * h * w)
    wmat = weight.data.reshape(cin, cout * k * k)
    out_shape = (n, cout, ho, wo)
    out = kernels.col2im(wmat.T @ xmat, out_shape, k, stride, padding)
    if bias is not None:
        bias = _lift(bias)
        out += bias.data.reshape(1, cout, 1, 1)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def vjp(g):
        gcols = kernels.im2col(g, k, stride, padding)
        gx = gw = gb = None
        if x.requires_grad:
            gx = np.ascontiguousarray((wmat @ gcols).reshape(cin, n, h, w).transpose(1, 0, 2, 3))
        if weight.requires_grad:
            gw = (xmat @ gcols.T).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    return make_result(out, inputs, vjp, "conv_transpose2d")


def instance_norm(x, eps=1e-5, weight=None, bias=None):
    """Normalize every (n, c) plane to zero mean, unit variance; optional affine."""
    x = _lift(x)
    _check4(x, "instance_norm")
    n, c, h, w = x.shape
    mu = x.data.mean(axis=(2, 3), keepdims=True)
    xc = x.data - mu
    var = np.square(xc).mean(axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat
    if weight is not None:
        weight = _lift(weight)
        out = out * weight.data.reshape(1, c, 1, 1)
    if bias is not None:
        bias = _lift(bias)
        out = out + bias.data.reshape(1, c, 1, 1)
    inputs = tuple(t for t in (x, weight, bias) if t is not None)

    def vjp(g):
        gw = gb = None
        if weight is not None and weight.requires_grad:
            gw = (g * xhat).sum(axis=(0, 2, 3))
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        gh = g * weight.data.reshape(1, c, 1, 1) if weight is not None else g
        gx = None
        if x.requires_grad:
            gx = inv * (gh - gh.mean(axis=(2, 3), keepdims=True)
                        - xhat * (gh * xhat).mean(axis=(2, 3), keepdims=True))
        grads = [gx]
        if weight is not None:
            grads.append(gw)
        if bias is not None:
            grads.append(gb)
        return tuple(grads)

    return make_result(out.astype(x.dtype, copy=False), inputs, vjp, "instance_norm")


def upsample_nearest(x, factor):
    x = _lift(x)
    _check4(x, "upsample_nearest")
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def vjp(g):
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return make_result(out, (x,), vjp, "upsample_nearest")


def avg_pool(x, factor):
    """Area-average downsampling by an integer factor (mass preserving)."""
    x = _lift(x)
    _check4(x, "avg_pool")
    n, c, h, w = x.shape
    if h % factor or w % factor:
        raise DimensionError(f"spatial size {h}x{w} not divisible by {factor}")
    ho, wo = h // factor, w // factor
    out = x.data.reshape(n, c, ho, factor, wo, factor).mean(axis=(3, 5))
    scale = 1.0 / (factor * factor)

    def vjp(g):
        up = np.repeat(np.repeat(g, factor, axis=2), factor, axis=3)
        return ((up * scale).astype(g.dtype, copy=False),)

    return make_result(out.astype(x.dtype, copy=False), (x,), vjp, "avg_pool")


def softmax(x, axis=1):
    x = _lift(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return make_result(p, (x,), vjp, "softmax")


def cross_entropy(logits, labels):
    """Mean pixel-wise cross-entropy of NCHW ``logits`` against integer labels (N,H,W)."""
    logits = _lift(logits)
    _check4(logits, "cross_entropy")
    labels = np.asarray(labels)
    n, c, h, w = logits.shape
    if labels.shape != (n, h, w):
        raise DimensionError(f"labels {labels.shape} do not match logits {logits.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    onehot = np.zeros_like(logp)
    np.put_along_axis(onehot, labels[:, None].astype(np.intp), 1, axis=1)
    count = n * h * w
    loss = -(logp * onehot).sum() / count

    def vjp(g):
        return (g * (np.exp(logp) - onehot) / count,)

    return make_result(np.asarray(loss, dtype=logits.dtype), (logits,), vjp, "cross_entropy")
