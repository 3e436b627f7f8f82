"""Stencil assembly backend: compiled when available, numpy otherwise."""
from __future__ import annotations

import os

from . import _assembly_py

try:
    if os.environ.get("CONVEXREG_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from ._assembly import assemble_stencil
    BACKEND = "cython"
except ImportError:
    assemble_stencil = _assembly_py.assemble_stencil
    BACKEND = "numpy"

assemble_stencil_py = _assembly_py.assemble_stencil
