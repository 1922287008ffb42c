"""Numba switch.

Hot kernels are compiled with numba when it is importable. Setting
``GROUNDRAG_DISABLE_NUMBA=1`` forces the pure-numpy fallbacks, which is
how the test suite checks that both paths agree.
"""

import os

_DISABLED = os.environ.get("GROUNDRAG_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError("numba disabled by GROUNDRAG_DISABLE_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False
    njit = None


def jit(fn):
    """Compile ``fn`` with numba when available; otherwise return None."""
    if not HAS_NUMBA:
        return None
    return njit(cache=True, nogil=True)(fn)
