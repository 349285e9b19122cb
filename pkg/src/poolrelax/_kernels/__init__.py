"""Sparse LDL^T kernels: compiled extension when built, pure Python otherwise.

Set ``POOLRELAX_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _ldl_py as fallback

compiled = None
if os.environ.get("POOLRELAX_PURE_PYTHON", "") != "1":
    try:
        from . import _ldl as compiled
    except ImportError:  # extension not built
        compiled = None

backend = compiled if compiled is not None else fallback
BACKEND_NAME = "compiled" if compiled is not None else "python"

min_degree = backend.min_degree
etree = backend.etree
factor = backend.factor
solve = backend.solve

__all__ = ["min_degree", "etree", "factor", "solve", "BACKEND_NAME", "compiled", "fallback"]
