"""Kernel backend selection.

The element kernels are written as plain Python loops over numpy arrays and
compiled with numba's ``@njit`` by default.  Setting the environment variable
``SHELLFEMU_JIT=0`` (before import) selects the interpreted pure-numpy path,
which runs the identical code and produces bit-identical results; it is the
reference for debugging and for the backend benchmark.
"""

from __future__ import annotations

import os

_flag = os.environ.get("SHELLFEMU_JIT", "1").strip().lower()
_requested = _flag not in ("0", "false", "no", "off")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    HAVE_NUMBA = False

JIT_ENABLED = _requested and HAVE_NUMBA


def maybe_jit(func):
    if JIT_ENABLED:
        return numba.njit(cache=True, nogil=True)(func)
    return func


def backend_name():
    return "numba" if JIT_ENABLED else "numpy"
