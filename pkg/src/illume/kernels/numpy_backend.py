"""Pure NumPy implementations of the hot network kernels.

Convolutions are expressed through sliding-window views and einsum so the
contraction lands in BLAS. Semantics are shared with the compiled backend:
float64 everywhere, zero padding, floor output sizing, and max-pool ties
resolved to the first maximum in row-major window order.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NAME = "numpy"


def conv_output_side(side: int, kernel: int, stride: int, pad: int) -> int:
    return (side + 2 * pad - kernel) // stride + 1


def _pad_hw(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    # (n, c, ho, wo, kh, kw) strided view over the padded input
    return sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int, pad: int) -> np.ndarray:
    """Cross-correlate x (n, c, h, w) with filters w (f, c, kh, kw) plus bias."""
    win = _windows(_pad_hw(x, pad), w.shape[2], w.shape[3], stride)
    out = np.einsum("nchwij,fcij->nfhw", win, w, optimize=True)
    out += b[None, :, None, None]
    return out


def conv2d_backward(x: np.ndarray, w: np.ndarray, stride: int, pad: int, dout: np.ndarray):
    """Gradients of conv2d_forward w.r.t. input, filters, and bias."""
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    ho, wo = dout.shape[2], dout.shape[3]

    xp = _pad_hw(x, pad)
    win = _windows(xp, kh, kw, stride)
    dw = np.einsum("nfhw,nchwij->fcij", dout, win, optimize=True)
    db = dout.sum(axis=(0, 2, 3))

    dxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            contrib = np.einsum("nfhw,fc->nchw", dout, w[:, :, i, j], optimize=True)
            dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += contrib
    dx = dxp[:, :, pad : pad + h, pad : pad + wd] if pad else dxp
    return dx, dw, db


def maxpool_forward(x: np.ndarray, size: int, stride: int):
    """Max over size x size windows; returns (out, argmax).

    argmax holds, per output element, the flat index into the (h, w) plane
    of the winning input pixel. Ties go to the first maximum in row-major
    window order, which fixes the backward routing deterministically.
    """
    n, c, h, w = x.shape
    win = _windows(x, size, size, stride)
    ho, wo = win.shape[2], win.shape[3]
    flat = win.reshape(n, c, ho, wo, size * size)
    local = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, local[..., None], axis=-1)[..., 0]
    di, dj = np.divmod(local, size)
    rows = di + (np.arange(ho) * stride)[None, None, :, None]
    cols = dj + (np.arange(wo) * stride)[None, None, None, :]
    return out, (rows * w + cols).astype(np.int64)


def maxpool_backward(x_shape, argmax: np.ndarray, dout: np.ndarray) -> np.ndarray:
    n, c, h, w = x_shape
    dx = np.zeros((n, c, h * w))
    ni = np.arange(n)[:, None, None, None]
    ci = np.arange(c)[None, :, None, None]
    np.add.at(dx, (ni, ci, argmax), dout)
    return dx.reshape(n, c, h, w)
