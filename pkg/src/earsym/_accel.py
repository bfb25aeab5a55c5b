"""Numba switch.

Hot kernels are compiled with ``numba.njit`` when numba is importable and the
environment variable ``EARSYM_DISABLE_NUMBA`` is unset (or ``0``).  Otherwise
the pure-numpy implementations in :mod:`earsym.kernels` are used.  The flag is
read once at import time.
"""

import os



def _disabled_by_env():
    flag = os.environ.get("EARSYM_DISABLE_NUMBA", "").strip().lower()
    return flag not in ("", "0", "false", "no")


DISABLED = _disabled_by_env()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` if numba is installed, else an identity decorator."""
    if numba is None:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)
