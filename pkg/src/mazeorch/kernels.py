"""Kernel backend selection.

The compiled Cython module is used when it was built; otherwise the
pure-Python fallback is imported. Set ``MAZEORCH_PURE_PYTHON=1`` to force
the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("MAZEORCH_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

bfs_distances = _impl.bfs_distances
trace_path = _impl.trace_path

__all__ = ["BACKEND", "bfs_distances", "trace_path"]
