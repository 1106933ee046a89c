"""Kernel backend selection.

The compiled extension (``_native``) is preferred; the numpy fallback
(``_python``) is used when the extension is missing. ``RAWVSR_KERNELS`` forces
a backend: ``native``, ``python``, or ``auto`` (default).
"""

import importlib
import os

_choice = os.environ.get("RAWVSR_KERNELS", "auto")
if _choice not in ("auto", "native", "python"):
    raise ValueError(f"RAWVSR_KERNELS must be auto|native|python, got {_choice!r}")

_impl = None
if _choice in ("auto", "native"):
    try:
        from . import _native as _impl
    except ImportError:
        if _choice == "native":
            raise
if _impl is None:
    from . import _python as _impl

BACKEND = _impl.BACKEND_NAME
im2col = _impl.im2col
col2im = _impl.col2im
bilinear_gather = _impl.bilinear_gather
bilinear_scatter = _impl.bilinear_scatter


def available_backends():
    """Names of backends importable in this installation."""
    names = ["python"]
    try:
        importlib.import_module("rawvsr.kernels._native")
        names.insert(0, "native")
    except ImportError:
        pass
    return names


def load_backend(name):
    """Import a specific backend module (for tests and benchmarks)."""
    if name not in ("native", "python"):
        raise ValueError(f"unknown backend {name!r}")
    return importlib.import_module(f"rawvsr.kernels._{name}")
