"""Numba availability and backend selection.

Setting ``OCTBEC_DISABLE_NUMBA=1`` (or ``true``/``yes``) before import forces
the pure-numpy kernels. The choice is made once, at import time.
"""

import os

_FLAG = os.environ.get("OCTBEC_DISABLE_NUMBA", "").strip().lower()

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise."""
    if HAS_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(func):
        return func

    return wrap


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
