"""Central finite-difference oracle, independent of the autodiff path."""

import numpy as np

from genet.diffcore import Tensor


def numeric_grad(f, arrays, index, eps):
    """d f / d arrays[index] by central differences; ``f`` maps arrays -> float."""
    base = [a.copy() for a in arrays]
    x = base[index]
    g = np.zeros(x.shape, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = f(base)
        flat[i] = old - eps
        fm = f(base)
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * eps)
    return g


def analytic_grads(build, arrays):
    ts = [Tensor(a, requires_grad=True, dtype=a.dtype) for a in arrays]
    out = build(*ts)
    out.backward()
    return [t.grad for t in ts]


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


def check(build, arrays, eps=None):
    """Max relative error between autodiff and finite differences over all inputs.

    ``build`` maps Tensors to a scalar Tensor. Finite differences for float32
    inputs are taken in float64 on the same graph to keep the oracle's own
    rounding error out of the comparison.
    """
    grads = analytic_grads(build, arrays)

    def f(arrs):
        ts = [Tensor(a, dtype=np.float64) for a in arrs]
        return float(build(*ts).data)

    hi = [a.astype(np.float64) for a in arrays]
    if eps is None:
        eps = 1e-6
    errs = []
    for i in range(len(arrays)):
        num = numeric_grad(f, hi, i, eps)
        errs.append(rel_err(grads[i], num))
    return max(errs)
