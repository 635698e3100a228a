"""Optional numba acceleration.

The packed kernels are written in numba-compatible Python; when numba is
importable they are jitted, otherwise the same source runs interpreted.
Set NOHARM_NO_JIT=1 to force the interpreted path.
"""

from __future__ import annotations

import os

HAVE_NUMBA = False

if not os.environ.get("NOHARM_NO_JIT"):
    try:
        from numba import njit as _njit

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - environment without numba
        HAVE_NUMBA = False


def maybe_jit(func):
    if HAVE_NUMBA:
        return _njit(cache=True)(func)
    return func
