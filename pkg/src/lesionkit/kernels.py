"""Backend selection for the numeric kernels.

The compiled Cython module is used when it imports; otherwise, or when
``LESIONKIT_PURE_PYTHON=1`` is set, the NumPy implementations are used.
Both expose the same functions with the same results.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_FUNCTIONS = ("warp_bilinear", "im2col3x3", "col2im3x3", "maxpool2x2",
              "maxpool2x2_backward", "slic_assign")

_impl: ModuleType = _pykernels


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _ckernels is not None else [])


def backend_module(name: str) -> ModuleType:
    if name == "python":
        return _pykernels
    if name == "cython":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not available; rebuild the package")
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def set_backend(name: str) -> None:
    """Switch the active backend ("python" or "cython") for the whole process."""
    global _impl
    _impl = backend_module(name)


def get_backend() -> str:
    return "cython" if _impl is _ckernels and _ckernels is not None else "python"


def _select_default() -> None:
    if os.environ.get("LESIONKIT_PURE_PYTHON", "") not in ("", "0") or _ckernels is None:
        set_backend("python")
    else:
        set_backend("cython")


def warp_bilinear(img, matrix, offset, fill):
    return _impl.warp_bilinear(img, matrix, offset, fill)


def im2col3x3(x):
    return _impl.im2col3x3(x)


def col2im3x3(cols, n, h, w, c):
    return _impl.col2im3x3(cols, n, h, w, c)


def maxpool2x2(x):
    return _impl.maxpool2x2(x)


def maxpool2x2_backward(dout, idx, h, w):
    return _impl.maxpool2x2_backward(dout, idx, h, w)


def slic_assign(intensity, centers, step, compactness, radius):
    return _impl.slic_assign(intensity, centers, step, compactness, radius)


_select_default()
