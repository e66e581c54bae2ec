"""Optional numba acceleration for the hot kernels.

Set ``COALITION_MARKET_DISABLE_NUMBA=1`` to run every kernel as plain Python.
The decorated function always keeps the undecorated original on ``py_func`` so
tests can compare both paths in one process.
"""
from __future__ import annotations

import os

_DISABLED = os.environ.get("COALITION_MARKET_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError
    import numba as _numba
except ImportError:  # pragma: no cover - depends on environment
    _numba = None

NUMBA_ENABLED = _numba is not None


def njit(*args, **kwargs):
    """``numba.njit`` when available and enabled, identity otherwise."""

    def wrap(fn):
        if _numba is None:
            fn.py_func = fn
            return fn
        return _numba.njit(cache=True, **kwargs)(fn)

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return wrap(args[0])
    return wrap
