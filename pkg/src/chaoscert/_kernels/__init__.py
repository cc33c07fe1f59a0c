"""Hot-kernel backend selection.

The validated stepping loop dominates runtime on real runs, so it exists
twice: a Cython extension (``chaoscert._kernels._fast``) and a pure
numpy implementation (:mod:`chaoscert._kernels.py_backend`).  The compiled
backend is preferred when importable; both satisfy the same enclosure
contracts and are compared by ``benchmarks/bench_kernels.py``.
"""

from __future__ import annotations

import importlib
import os

from chaoscert._kernels import py_backend

_fast = None
if os.environ.get("CHAOSCERT_FORCE_PY") != "1":
    try:
        _fast = importlib.import_module("chaoscert._kernels._fast")
    except ImportError:
        _fast = None


def compiled_core():
    """The compiled extension module, or None when running pure Python."""
    return _fast


def backend():
    """Module implementing the hot kernels (compiled if available)."""
    return _fast if _fast is not None else py_backend


def backend_name() -> str:
    return "cython" if _fast is not None else "python"
