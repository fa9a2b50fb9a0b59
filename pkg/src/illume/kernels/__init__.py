"""Backend selection for the hot network kernels.

Two interchangeable implementations exist: a Cython extension
(illume.kernels._core) compiled at install time, and a pure NumPy
fallback. The active one is picked at import:

  * ILLUME_KERNELS=cython  require the compiled core, fail if missing
  * ILLUME_KERNELS=numpy   force the fallback
  * unset or "auto"        compiled core when built, else NumPy

Both produce the same results up to floating-point summation order;
benchmarks/bench_kernels.py compares their speed.
"""

from __future__ import annotations

import os

from illume.kernels import numpy_backend

try:
    from illume.kernels import _core as _compiled
except ImportError:
    _compiled = None


def available_backends() -> tuple[str, ...]:
    return ("numpy", "cython") if _compiled is not None else ("numpy",)


def get_backend(name: str):
    """Return the backend module for an explicit name (tests, benchmarks)."""
    if name == "numpy":
        return numpy_backend
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernel extension is not built")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


def _resolve_default():
    choice = os.environ.get("ILLUME_KERNELS", "auto").lower()
    if choice == "auto":
        return _compiled if _compiled is not None else numpy_backend
    return get_backend(choice)


_active = _resolve_default()


def backend_name() -> str:
    return _active.NAME


def use_backend(name: str) -> None:
    """Switch the process-wide backend. Not thread-safe; meant for tests."""
    global _active
    _active = get_backend(name)


def conv_output_side(side: int, kernel: int, stride: int, pad: int) -> int:
    return numpy_backend.conv_output_side(side, kernel, stride, pad)


def conv2d_forward(x, w, b, stride, pad):
    return _active.conv2d_forward(x, w, b, stride, pad)


def conv2d_backward(x, w, stride, pad, dout):
    return _active.conv2d_backward(x, w, stride, pad, dout)


def maxpool_forward(x, size, stride):
    return _active.maxpool_forward(x, size, stride)


def maxpool_backward(x_shape, argmax, dout):
    return _active.maxpool_backward(x_shape, argmax, dout)
