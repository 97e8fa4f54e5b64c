"""JIT switch.

Hot kernels are written once for numba and once in vectorised numpy. The numba
path is used when numba imports and ``FLOWMANIFOLD_DISABLE_NUMBA`` is unset or
``0``; set it to ``1`` to force the numpy fallback everywhere.
"""

import os

_flag = os.environ.get("FLOWMANIFOLD_DISABLE_NUMBA", "0").strip().lower()
DISABLE_NUMBA = _flag not in ("", "0", "false", "no")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not DISABLE_NUMBA

NUMBA_OPTS = {"cache": True, "nogil": True}


def njit(func):
    """``numba.njit`` with package defaults; identity when numba is absent."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(**NUMBA_OPTS)(func)
