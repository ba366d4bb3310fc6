"""Backend selection for the hot blend kernel.

The compiled Cython extension is used when present; otherwise the numpy
fallback. `backend_name` reports which one was picked (the benchmark and
tests use it).
"""
from __future__ import annotations

try:
    from . import _blend as _impl

    backend_name = "compiled"
except ImportError:  # extension not built
    from . import _blend_py as _impl

    backend_name = "python"

from . import _blend_py as python_impl

compiled_impl = _impl if backend_name == "compiled" else None

eval_batch = _impl.eval_batch
