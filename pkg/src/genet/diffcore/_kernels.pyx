# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled im2col / col2im kernels (same layout as ``_kernels_py``)."""

import numpy as np

ctypedef fused real:
    float
    double


cdef inline Py_ssize_t _first_valid(Py_ssize_t off, Py_ssize_t stride) noexcept nogil:
    # smallest o >= 0 with o*stride + off >= 0
    if off >= 0:
        return 0
    return (-off + stride - 1) // stride


cdef inline Py_ssize_t _end_valid(Py_ssize_t off, Py_ssize_t stride, Py_ssize_t size,
                                  Py_ssize_t count) noexcept nogil:
    # one past the largest o < count with o*stride + off < size
    cdef Py_ssize_t e
    if size - off <= 0:
        return 0
    e = (size - off - 1) // stride + 1
    return e if e < count else count


cdef void _im2col(const real[:, :, :, ::1] x, real[:, ::1] out,
                  Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad,
                  Py_ssize_t ho, Py_ssize_t wo) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ci, i, j, b, oy, ox, iy, row, ox0, ox1, base
    cdef real *dst
    cdef const real *src
    for ci in range(c):
        for i in range(k):
            for j in range(k):
                row = (ci * k + i) * k + j
                ox0 = _first_valid(j - pad, stride)
                ox1 = _end_valid(j - pad, stride, w, wo)
                for b in range(n):
                    for oy in range(ho):
                        dst = &out[row, (b * ho + oy) * wo]
                        iy = oy * stride + i - pad
                        if iy < 0 or iy >= h or ox1 <= ox0:
                            for ox in range(wo):
                                dst[ox] = 0
                            continue
                        for ox in range(ox0):
                            dst[ox] = 0
                        src = &x[b, ci, iy, 0]
                        base = j - pad
                        if stride == 1:
                            for ox in range(ox0, ox1):
                                dst[ox] = src[ox + base]
                        else:
                            for ox in range(ox0, ox1):
                                dst[ox] = src[ox * stride + base]
                        for ox in range(ox1, wo):
                            dst[ox] = 0


cdef void _col2im(const real[:, ::1] cols, real[:, :, :, ::1] out,
                  Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad,
                  Py_ssize_t ho, Py_ssize_t wo) noexcept nogil:
    cdef Py_ssize_t n = out.shape[0], c = out.shape[1], h = out.shape[2], w = out.shape[3]
    cdef Py_ssize_t ci, i, j, b, oy, ox, iy, row, ox0, ox1, base
    cdef real *dst
    cdef const real *src
    for ci in range(c):
        for i in range(k):
            for j in range(k):
                row = (ci * k + i) * k + j
                ox0 = _first_valid(j - pad, stride)
                ox1 = _end_valid(j - pad, stride, w, wo)
                if ox1 <= ox0:
                    continue
                base = j - pad
                for b in range(n):
                    for oy in range(ho):
                        iy = oy * stride + i - pad
                        if iy < 0 or iy >= h:
                            continue
                        src = &cols[row, (b * ho + oy) * wo]
                        dst = &out[b, ci, iy, 0]
                        if stride == 1:
                            for ox in range(ox0, ox1):
                                dst[ox + base] += src[ox]
                        else:
                            for ox in range(ox0, ox1):
                                dst[ox * stride + base] += src[ox]


def im2col(x, k, stride, pad):
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    out = np.empty((c * k * k, n * ho * wo), dtype=x.dtype)
    if x.dtype == np.float32:
        _im2col[float](x, out, k, stride, pad, ho, wo)
    elif x.dtype == np.float64:
        _im2col[double](x, out, k, stride, pad, ho, wo)
    else:
        raise TypeError(f"unsupported dtype {x.dtype}")
    return out


def col2im(cols, shape, k, stride, pad):
    cols = np.ascontiguousarray(cols)
    n, c, h, w = shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    out = np.zeros((n, c, h, w), dtype=cols.dtype)
    if cols.dtype == np.float32:
        _col2im[float](cols, out, k, stride, pad, ho, wo)
    elif cols.dtype == np.float64:
        _col2im[double](cols, out, k, stride, pad, ho, wo)
    else:
        raise TypeError(f"unsupported dtype {cols.dtype}")
    return out
