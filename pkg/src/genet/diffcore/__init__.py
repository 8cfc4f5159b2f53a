"""Minimal dense-tensor substrate with reverse-mode automatic differentiation."""

from . import kernels
from .nn import (
    avg_pool,
    conv2d,
    conv_transpose2d,
    cross_entropy,
    instance_norm,
    softmax,
    upsample_nearest,
)
from .ops import (
    abs,
    add,
    broadcast_to,
    clamp,
    concat,
    elementwise,
    l1,
    l2,
    matmul,
    mean,
    mul,
    reduce,
    relu,
    reshape,
    sigmoid,
    sub,
    sum,
)
from .optim import SGD, Adam, sgd_step
from .serialize import dumps_weights, load_weights, loads_weights, save_weights
from .tensor import ComputationTape, Tensor, as_tensor, backward, grad_enabled, no_grad

__all__ = [
    "Adam", "ComputationTape", "SGD", "Tensor", "abs", "add", "as_tensor", "avg_pool",
    "backward", "broadcast_to", "clamp", "concat", "conv2d", "conv_transpose2d",
    "cross_entropy", "dumps_weights", "elementwise", "grad_enabled", "instance_norm",
    "kernels", "l1", "l2", "load_weights", "loads_weights", "matmul", "mean", "mul",
    "no_grad", "reduce", "relu", "reshape", "save_weights", "sgd_step", "sigmoid",
    "softmax", "sub", "sum", "upsample_nearest",
]
