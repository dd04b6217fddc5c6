"""Simulation loop backends: compiled kernel with a pure-Python fallback.

The compiled extension is selected automatically when it importable; set
``QUADPIDA_BACKEND=python`` or ``=compiled`` to force one. Both produce
bit-identical results for the same plan and seeds.
"""

from __future__ import annotations

import os
import warnings

from .plan import LoopBuffers, LoopPlan

try:
    from . import _core
except ImportError:  # extension not built on this platform
    _core = None

from . import pyloop

_BACKENDS = {"python": pyloop}
if _core is not None:
    _BACKENDS["compiled"] = _core


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def get_backend(name: str | None = None):
    """Resolve a loop backend module by name, env var, or availability."""
    if name is None:
        name = os.environ.get("QUADPIDA_BACKEND", "auto")
    if name == "auto":
        if _core is None:
            warnings.warn(
                "compiled simulation kernel not available; falling back to the "
                "pure-Python loop (slow)",
                RuntimeWarning,
                stacklevel=2,
            )
            return pyloop
        return _core
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"unknown backend {name!r}; available: {available_backends()}"
        ) from None


__all__ = ["LoopBuffers", "LoopPlan", "available_backends", "get_backend"]
