"""Hot CNN kernels with a compiled backend and a NumPy fallback.

The compiled module is used when it was built; set ``IRSPB_KERNELS=python``
to force the NumPy implementation.
"""

import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

if _ckernels is not None and os.environ.get("IRSPB_KERNELS", "").lower() != "python":
    _impl = _ckernels
    BACKEND = "cython"
else:
    _impl = _pykernels
    BACKEND = "python"


def available_backends():
    names = ["python"]
    if _ckernels is not None:
        names.append("cython")
    return names


def get_backend(name):
    if name == "python":
        return _pykernels
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built")
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def conv2d_forward(x, w, b):
    return _impl.conv2d_forward(_c(x), _c(w), _c(b))


def conv2d_backward(x, w, gy):
    return _impl.conv2d_backward(_c(x), _c(w), _c(gy))


def maxpool2x2_forward(x):
    return _impl.maxpool2x2_forward(_c(x))


def maxpool2x2_backward(gy, idx, in_shape):
    return _impl.maxpool2x2_backward(_c(gy), np.ascontiguousarray(idx, dtype=np.int64), tuple(in_shape))
