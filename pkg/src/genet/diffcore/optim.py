"""Parameter updates."""

import numpy as np

from ..errors import ContractError


def sgd_step(params, lrs):
    """In-place ``p <- p - lr * grad`` for each tensor.

    ``lrs`` is a single rate, one rate per tensor, or one array of per-element
    rates per tensor.
    """
    params = list(params)
    if np.isscalar(lrs):
        lrs = [lrs] * len(params)
    lrs = list(lrs)
    if len(lrs) != len(params):
        raise ContractError(f"{len(lrs)} learning rates for {len(params)} tensors")
    for p, lr in zip(params, lrs):
        if p.grad is None:
            raise ContractError("sgd_step on a tensor without a populated grad")
        lr = np.asarray(lr, dtype=p.dtype)
        if lr.size != 1 and lr.shape != p.shape:
            raise ContractError(f"per-element rates {lr.shape} do not match tensor {p.shape}")
        p.data -= lr * p.grad


class SGD:
    """Mini-batch SGD with optional momentum."""

    def __init__(self, params, lr, momentum=0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self._velocity = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        for p, v in zip(self.params, self._velocity):
            if p.grad is None:
                continue
            if self.momentum:
                v *= self.momentum
                v += p.grad
                p.data -= np.asarray(self.lr, p.dtype) * v
            else:
                p.data -= np.asarray(self.lr, p.dtype) * p.grad


class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            m *= self.b1
            m += (1 - self.b1) * p.grad
            v *= self.b2
            v += (1 - self.b2) * np.square(p.grad)
            step = (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)
            p.data -= step.astype(p.dtype, copy=False)
