"""Pure-numpy convolution kernels (im2col / col2im), the fallback backend.

All arrays are float64. Layouts: activations N x C x H x W, weights
F x C x kh x kw. These three functions are the whole backend contract; the
transposed convolution is expressed through them by the caller.
"""

import numpy as np


def _pad(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def conv2d_forward(x, w, stride=1, pad=0):
    n, c, h, width = x.shape
    f, cw, kh, kw = w.shape
    assert c == cw
    xp = _pad(x, pad)
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (width + 2 * pad - kw) // stride + 1
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]  # N,C,Ho,Wo,kh,kw
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(n, ho, wo, c * kh * kw)
    y = cols @ w.reshape(f, c * kh * kw).T  # N,Ho,Wo,F
    return np.ascontiguousarray(y.transpose(0, 3, 1, 2))


def conv2d_grad_input(gy, w, x_shape, stride=1, pad=0):
    n, c, h, width = x_shape
    f, cw, kh, kw = w.shape
    ho, wo = gy.shape[2], gy.shape[3]
    gx_pad = np.zeros((n, c, h + 2 * pad, width + 2 * pad))
    for i in range(kh):
        for j in range(kw):
            # (N,Ho,Wo,C) contribution of kernel tap (i, j)
            t = np.tensordot(gy, w[:, :, i, j], axes=([1], [0]))
            gx_pad[:, :, i:i + ho * stride:stride, j:j + wo * stride:stride] += t.transpose(0, 3, 1, 2)
    if pad == 0:
        return gx_pad
    return np.ascontiguousarray(gx_pad[:, :, pad:pad + h, pad:pad + width])


def conv2d_grad_weights(gy, x, w_shape, stride=1, pad=0):
    f, c, kh, kw = w_shape
    ho, wo = gy.shape[2], gy.shape[3]
    xp = _pad(x, pad)
    gw = np.empty(w_shape)
    for i in range(kh):
        for j in range(kw):
            xs = xp[:, :, i:i + ho * stride:stride, j:j + wo * stride:stride]
            gw[:, :, i, j] = np.tensordot(gy, xs, axes=([0, 2, 3], [0, 2, 3]))
    return gw
