"""Backend selection for the convolution kernels.

Two implementations exist: a compiled Cython extension and a pure-numpy
im2col version. The numpy version rides BLAS and benchmarks faster at the
channel counts this package trains with (see benchmarks/bench_conv.py), so
it is the default. Set POLARSFP_BACKEND=cython to use the extension instead;
forcing cython raises if the extension is not built.
"""

import os

import numpy as np

from . import _kernels_np


def _c64(a):
    return np.ascontiguousarray(a, dtype=np.float64)

_forced = os.environ.get("POLARSFP_BACKEND", "").lower()

if _forced == "cython":
    from . import _convkernels as _impl
    BACKEND = "cython"
else:
    _impl = _kernels_np
    BACKEND = "numpy"


def conv2d_forward(x, w, stride=1, pad=0):
    return _impl.conv2d_forward(_c64(x), _c64(w), stride, pad)


def conv2d_grad_input(gy, w, x_shape, stride=1, pad=0):
    return _impl.conv2d_grad_input(_c64(gy), _c64(w), tuple(x_shape), stride, pad)


def conv2d_grad_weights(gy, x, w_shape, stride=1, pad=0):
    return _impl.conv2d_grad_weights(_c64(gy), _c64(x), tuple(w_shape), stride, pad)
