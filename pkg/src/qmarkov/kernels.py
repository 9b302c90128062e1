"""Backend selection for the hot loops.

The compiled extension is preferred; set ``QMARKOV_PURE_PYTHON=1`` to force
the reference implementation (the benchmark and the backend-parity tests do
this explicitly through :func:`load`).
"""
from __future__ import annotations

import importlib
import os
from types import ModuleType

__all__ = [
    "BACKEND",
    "apply_rotation_tree",
    "bottleneck_matching",
    "cross_terms",
    "load",
    "perfect_matching",
]


def load(name: str | None = None) -> ModuleType:
    """Return a kernel module: ``"cython"``, ``"python"`` or best available."""
    if name == "python":
        return importlib.import_module("qmarkov._kernels_py")
    if name == "cython":
        return importlib.import_module("qmarkov._kernels")
    try:
        return importlib.import_module("qmarkov._kernels")
    except ImportError:
        return importlib.import_module("qmarkov._kernels_py")


_impl = load("python" if os.environ.get("QMARKOV_PURE_PYTHON") == "1" else None)

BACKEND: str = _impl.BACKEND
perfect_matching = _impl.perfect_matching
bottleneck_matching = _impl.bottleneck_matching
apply_rotation_tree = _impl.apply_rotation_tree
cross_terms = _impl.cross_terms
