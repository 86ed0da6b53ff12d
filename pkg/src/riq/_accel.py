"""Optional numba acceleration.

Hot loops live in two flavours: an ``@njit`` kernel and a vectorised numpy
equivalent.  Set ``RIQ_DISABLE_NUMBA=1`` to force the numpy path (also used
automatically when numba is not importable).
"""

import os

_disabled = os.environ.get("RIQ_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _disabled:
        raise ImportError
    import numba
    from numba import prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    numba = None
    prange = range
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
