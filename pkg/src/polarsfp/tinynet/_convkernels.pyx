# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution kernels; same contract as _kernels_np."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def conv2d_forward(cnp.float64_t[:, :, :, ::1] x, cnp.float64_t[:, :, :, ::1] w,
                   int stride=1, int pad=0):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], width = x.shape[3]
    cdef Py_ssize_t f = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (width + 2 * pad - kw) // stride + 1
    out = np.zeros((n, f, ho, wo), dtype=np.float64)
    cdef cnp.float64_t[:, :, :, ::1] y = out
    cdef Py_ssize_t ni, fi, ci, p, q, i, j, hi, wi
    cdef double acc
    for ni in range(n):
        for fi in range(f):
            for p in range(ho):
                for q in range(wo):
                    acc = 0.0
                    for ci in range(c):
                        for i in range(kh):
                            hi = p * stride + i - pad
                            if hi < 0 or hi >= h:
                                continue
                            for j in range(kw):
                                wi = q * stride + j - pad
                                if wi < 0 or wi >= width:
                                    continue
                                acc += w[fi, ci, i, j] * x[ni, ci, hi, wi]
                    y[ni, fi, p, q] = acc
    return out


def conv2d_grad_input(cnp.float64_t[:, :, :, ::1] gy, cnp.float64_t[:, :, :, ::1] w,
                      x_shape, int stride=1, int pad=0):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], width = x_shape[3]
    cdef Py_ssize_t f = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = gy.shape[2], wo = gy.shape[3]
    out = np.zeros((n, c, h, width), dtype=np.float64)
    cdef cnp.float64_t[:, :, :, ::1] gx = out
    cdef Py_ssize_t ni, fi, ci, p, q, i, j, hi, wi
    cdef double g
    for ni in range(n):
        for fi in range(f):
            for p in range(ho):
                for q in range(wo):
                    g = gy[ni, fi, p, q]
                    for ci in range(c):
                        for i in range(kh):
                            hi = p * stride + i - pad
                            if hi < 0 or hi >= h:
                                continue
                            for j in range(kw):
                                wi = q * stride + j - pad
                                if wi < 0 or wi >= width:
                                    continue
                                gx[ni, ci, hi, wi] += w[fi, ci, i, j] * g
    return out


def conv2d_grad_weights(cnp.float64_t[:, :, :, ::1] gy, cnp.float64_t[:, :, :, ::1] x,
                        w_shape, int stride=1, int pad=0):
    cdef Py_ssize_t f = w_shape[0], c = w_shape[1], kh = w_shape[2], kw = w_shape[3]
    cdef Py_ssize_t n = x.shape[0], h = x.shape[2], width = x.shape[3]
    cdef Py_ssize_t ho = gy.shape[2], wo = gy.shape[3]
    out = np.zeros((f, c, kh, kw), dtype=np.float64)
    cdef cnp.float64_t[:, :, :, ::1] gw = out
    cdef Py_ssize_t ni, fi, ci, p, q, i, j, hi, wi
    cdef double acc
    for fi in range(f):
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    acc = 0.0
                    for ni in range(n):
                        for p in range(ho):
                            hi = p * stride + i - pad
                            if hi < 0 or hi >= h:
                                continue
                            for q in range(wo):
                                wi = q * stride + j - pad
                                if wi < 0 or wi >= width:
                                    continue
                                acc += gy[ni, fi, p, q] * x[ni, ci, hi, wi]
                    gw[fi, ci, i, j] = acc
    return out
