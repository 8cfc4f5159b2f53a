"""Pure-numpy im2col / col2im kernels.

Column layout shared with the compiled backend: rows are ordered
``(channel, ki, kj)`` and columns ``(n, ho, wo)``, so a convolution is a single
``weight.reshape(O, -1) @ cols`` GEMM over the whole batch.
"""

import numpy as np


def im2col(x, k, stride, pad):
    n, c, h, w = x.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    xp = np.zeros((c, n, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    xp[:, :, pad:pad + h, pad:pad + w] = x.transpose(1, 0, 2, 3)
    cols = np.empty((c, k, k, n, ho, wo), dtype=x.dtype)
    hs = stride * (ho - 1) + 1
    ws = stride * (wo - 1) + 1
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xp[:, :, i:i + hs:stride, j:j + ws:stride]
    return cols.reshape(c * k * k, n * ho * wo)


def col2im(cols, shape, k, stride, pad):
    n, c, h, w = shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    cols = cols.reshape(c, k, k, n, ho, wo)
    xp = np.zeros((c, n, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    hs = stride * (ho - 1) + 1
    ws = stride * (wo - 1) + 1
    for i in range(k):
        for j in range(k):
            xp[:, :, i:i + hs:stride, j:j + ws:stride] += cols[:, i, j]
    return np.ascontiguousarray(xp[:, :, pad:pad + h, pad:pad + w].transpose(1, 0, 2, 3))
