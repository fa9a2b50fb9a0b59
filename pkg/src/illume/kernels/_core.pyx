# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled conv/pool kernels.

Semantics mirror illume.kernels.numpy_backend: float64, zero padding,
floor output sizing, max-pool ties to the first maximum in row-major
window order. Parallel loops are partitioned so every output element is
accumulated by exactly one thread in a fixed order, which keeps results
deterministic at any thread count.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange

cnp.import_array()

NAME = "cython"


def conv_output_side(int side, int kernel, int stride, int pad):
    return (side + 2 * pad - kernel) // stride + 1


def conv2d_forward(double[:, :, :, ::1] x, double[:, :, :, ::1] w,
                   double[::1] b, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t f = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (wd + 2 * pad - kw) // stride + 1
    out_arr = np.empty((n, f, ho, wo), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, oy, ox, ch, ky, kx, yy, xx, y0, x0
    cdef double acc

    with nogil:
        for i in prange(n, schedule="static"):
            for j in range(f):
                for oy in range(ho):
                    y0 = oy * stride - pad
                    for ox in range(wo):
                        x0 = ox * stride - pad
                        acc = b[j]
                        for ch in range(c):
                            for ky in range(kh):
                                yy = y0 + ky
                                if yy < 0 or yy >= h:
                                    continue
                                for kx in range(kw):
                                    xx = x0 + kx
                                    if 0 <= xx < wd:
                                        acc = acc + x[i, ch, yy, xx] * w[j, ch, ky, kx]
                        out[i, j, oy, ox] = acc
    return out_arr


def conv2d_backward(double[:, :, :, ::1] x, double[:, :, :, ::1] w,
                    int stride, int pad, double[:, :, :, ::1] dout):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t f = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = dout.shape[2], wo = dout.shape[3]
    dx_arr = np.zeros((n, c, h, wd), dtype=np.float64)
    dw_arr = np.zeros((f, c, kh, kw), dtype=np.float64)
    db_arr = np.zeros(f, dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef double[:, :, :, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef Py_ssize_t i, j, oy, ox, ch, ky, kx, yy, xx, y0, x0
    cdef double g

    with nogil:
        # dx: each thread owns one sample plane
        for i in prange(n, schedule="static"):
            for j in range(f):
                for oy in range(ho):
                    y0 = oy * stride - pad
                    for ox in range(wo):
                        x0 = ox * stride - pad
                        g = dout[i, j, oy, ox]
                        for ch in range(c):
                            for ky in range(kh):
                                yy = y0 + ky
                                if yy < 0 or yy >= h:
                                    continue
                                for kx in range(kw):
                                    xx = x0 + kx
                                    if 0 <= xx < wd:
                                        dx[i, ch, yy, xx] += g * w[j, ch, ky, kx]
        # dw/db: each thread owns one filter
        for j in prange(f, schedule="static"):
            for i in range(n):
                for oy in range(ho):
                    y0 = oy * stride - pad
                    for ox in range(wo):
                        x0 = ox * stride - pad
                        g = dout[i, j, oy, ox]
                        db[j] += g
                        for ch in range(c):
                            for ky in range(kh):
                                yy = y0 + ky
                                if yy < 0 or yy >= h:
                                    continue
                                for kx in range(kw):
                                    xx = x0 + kx
                                    if 0 <= xx < wd:
                                        dw[j, ch, ky, kx] += g * x[i, ch, yy, xx]
    return dx_arr, dw_arr, db_arr


def maxpool_forward(double[:, :, :, ::1] x, int size, int stride):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = (h - size) // stride + 1
    cdef Py_ssize_t wo = (w - size) // stride + 1
    out_arr = np.empty((n, c, ho, wo), dtype=np.float64)
    arg_arr = np.empty((n, c, ho, wo), dtype=np.int64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef long long[:, :, :, ::1] arg = arg_arr
    cdef Py_ssize_t i, ch, oy, ox, ky, kx, yy, xx
    cdef Py_ssize_t best_idx
    cdef double best, v

    with nogil:
        for i in prange(n, schedule="static"):
            for ch in range(c):
                for oy in range(ho):
                    for ox in range(wo):
                        best = x[i, ch, oy * stride, ox * stride]
                        best_idx = (oy * stride) * w + ox * stride
                        for ky in range(size):
                            yy = oy * stride + ky
                            for kx in range(size):
                                xx = ox * stride + kx
                                v = x[i, ch, yy, xx]
                                if v > best:
                                    best = v
                                    best_idx = yy * w + xx
                        out[i, ch, oy, ox] = best
                        arg[i, ch, oy, ox] = best_idx
    return out_arr, arg_arr


def maxpool_backward(x_shape, long long[:, :, :, ::1] argmax, double[:, :, :, ::1] dout):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3]
    cdef Py_ssize_t ho = dout.shape[2], wo = dout.shape[3]
    dx_arr = np.zeros((n, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t i, ch, oy, ox, idx

    with nogil:
        for i in prange(n, schedule="static"):
            for ch in range(c):
                for oy in range(ho):
                    for ox in range(wo):
                        idx = argmax[i, ch, oy, ox]
                        dx[i, ch, idx // w, idx % w] += dout[i, ch, oy, ox]
    return dx_arr
