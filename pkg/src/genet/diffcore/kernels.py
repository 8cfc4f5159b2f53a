"""Backend selection for the convolution kernels.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``GENET_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

try:
    if os.environ.get("GENET_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend requested")
    from . import _kernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _kernels_py
    BACKEND = "numpy"

_BACKENDS = {"numpy": _kernels_py}
if BACKEND == "cython":
    _BACKENDS["cython"] = _impl


def available_backends():
    return sorted(_BACKENDS)


def use_backend(name):
    """Switch the active kernel backend (``"cython"`` or ``"numpy"``)."""
    global _impl, BACKEND
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    _impl = _BACKENDS[name]
    BACKEND = name


def im2col(x, k, stride, pad):
    return _impl.im2col(x, k, stride, pad)


def col2im(cols, shape, k, stride, pad):
    return _impl.col2im(cols, shape, k, stride, pad)
