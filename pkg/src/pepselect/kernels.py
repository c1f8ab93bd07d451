"""Kernel backend selection.

The compiled extension is preferred. Setting the environment variable
``PEPSELECT_PURE_PYTHON=1`` before import forces the numpy fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("PEPSELECT_PURE_PYTHON", "") != "1":
    try:
        from . import _ckernels  # type: ignore[attr-defined]
    except ImportError:
        pass
    else:
        _impl = _ckernels
        BACKEND = "cython"

euler_f1_batch = _impl.euler_f1_batch
enumerate_rss = _impl.enumerate_rss

__all__ = ["BACKEND", "euler_f1_batch", "enumerate_rss"]
