"""Backend selection for the hot loops.

Every hot kernel has two implementations: a numba ``@njit`` loop and a
vectorised numpy version. ``CSRGL_BACKEND`` picks one at import time
(``numba`` or ``numpy``); :func:`set_backend` switches at runtime.
"""
from __future__ import annotations

import os
from contextlib import contextmanager

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep in practice
    numba = None
    HAVE_NUMBA = False

_VALID = ("numba", "numpy")


def _initial_backend() -> str:
    requested = os.environ.get("CSRGL_BACKEND", "numba").strip().lower()
    if requested not in _VALID:
        raise ValueError(f"CSRGL_BACKEND must be one of {_VALID}, got {requested!r}")
    if requested == "numba" and not HAVE_NUMBA:
        return "numpy"
    return requested


_backend = _initial_backend()


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


@contextmanager
def backend(name: str):
    """Temporarily switch backend (used by tests and the benchmark)."""
    previous = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def njit(*args, **kwargs):
    """``numba.njit`` with on-disk caching; identity decorator without numba."""
    kwargs.setdefault("cache", True)
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn
    return numba.njit(*args, **kwargs)
