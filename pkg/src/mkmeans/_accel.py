"""Backend switch: numba kernels unless MKMEANS_DISABLE_NUMBA is set."""
from __future__ import annotations

import os

_FLAG = os.environ.get("MKMEANS_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")
BACKEND = "numba" if USE_NUMBA else "numpy"

NJIT_KWARGS = {"nogil": True, "cache": True, "fastmath": False}


def njit(fn):
    """``numba.njit`` with the package defaults; identity when numba is absent."""
    if numba is None:
        return fn
    return numba.njit(**NJIT_KWARGS)(fn)
