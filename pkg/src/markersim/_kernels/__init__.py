"""Backend selection for the ray-tracing kernels.

The compiled extension is preferred when importable; the pure-numpy fallback
is used otherwise.  ``MARKERSIM_PURE=1`` forces the fallback.  Both backends
implement the same two entry points (``coarse_trace``, ``refine_trace``)
with identical semantics.
"""

import os

from . import pure

if os.environ.get("MARKERSIM_PURE"):
    _impl = pure
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = pure

BACKEND = _impl.BACKEND
coarse_trace = _impl.coarse_trace
refine_trace = _impl.refine_trace

__all__ = ["BACKEND", "coarse_trace", "refine_trace", "pure", "get_backend"]


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` ("compiled", "pure" or None=active)."""
    if name is None:
        return _impl
    if name == "pure":
        return pure
    if name == "compiled":
        from . import _core  # raises ImportError when the extension is absent

        return _core
    raise ValueError(f"unknown backend {name!r}")
