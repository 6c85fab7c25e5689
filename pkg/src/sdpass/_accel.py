"""Backend switch for the compiled kernels.

Set ``SDPASS_NUMBA=0`` in the environment to force the pure-numpy path.
The flag is read once, at import time.
"""
import os

_flag = os.environ.get("SDPASS_NUMBA", "1").strip().lower()
_requested = _flag not in ("0", "false", "no", "off")

try:
    if not _requested:
        raise ImportError
    from numba import njit as _njit
    HAVE_NUMBA = True
except ImportError:
    _njit = None
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


def maybe_njit(func):
    """Compile ``func`` with numba when the numba backend is active."""
    if HAVE_NUMBA:
        return _njit(cache=True, nogil=True)(func)
    return None
