"""Kernel backend selection.

The hot loops (jet products, series composition, Lie contractions and the QP
active-set iteration) have a compiled Cython implementation and a NumPy twin.
The compiled one is chosen at import when it was built, unless
``MCBF_PURE_PYTHON=1`` is set.
"""
from __future__ import annotations

import os

from . import _jetcore_py, _qpcore_py

try:
    from . import _jetcore as _jet_c
    from . import _qpcore as _qp_c
except ImportError:  # extension not built
    _jet_c = _qp_c = None

jet = _jetcore_py
qp = _qpcore_py
BACKEND = "python"


def compiled_available() -> bool:
    return _jet_c is not None


def set_backend(name: str) -> str:
    """Select ``"compiled"`` or ``"python"`` kernels; returns the previous name."""
    global jet, qp, BACKEND
    previous = BACKEND
    if name == "compiled":
        if not compiled_available():
            raise RuntimeError("compiled kernels are not available; build the extension")
        jet, qp = _jet_c, _qp_c
    elif name == "python":
        jet, qp = _jetcore_py, _qpcore_py
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name
    return previous


def active() -> str:
    return BACKEND


if compiled_available() and os.environ.get("MCBF_PURE_PYTHON", "") not in ("1", "true", "yes"):
    set_backend("compiled")
