"""Backend selection for the numeric hot paths.

The heavy inner loops (pairwise kernel matrices, batched GP prediction,
the reactor steady-state solver) exist in two interchangeable flavours:
a numba ``@njit`` implementation and a vectorised numpy/scipy one.  The
active flavour is chosen by the ``PDCBO_BACKEND`` environment variable
(``numba`` or ``numpy``) at import time and can be switched at runtime
with :func:`set_backend`.  When numba is not importable the numpy path
is used regardless.

``python -m pdcbo.backend_bench`` times the two paths side by side.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

ENV_VAR = "PDCBO_BACKEND"
BACKENDS = ("numba", "numpy")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _resolve_initial() -> str:
    raw = os.environ.get(ENV_VAR, "numba").strip().lower()
    if raw not in BACKENDS:
        raise ValueError(
            f"{ENV_VAR}={raw!r} is not a valid backend; choose one of {BACKENDS}"
        )
    if raw == "numba" and not HAVE_NUMBA:
        return "numpy"
    return raw


_active = _resolve_initial()


def get_backend() -> str:
    """Return the name of the backend currently in use."""
    return _active


def set_backend(name: str) -> None:
    """Select the hot-path backend (``numba`` or ``numpy``)."""
    global _active
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; choose one of {BACKENDS}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    _active = name


def use_numba() -> bool:
    return _active == "numba" and HAVE_NUMBA


@contextmanager
def backend(name: str):
    """Temporarily switch backend (used by tests and the benchmark)."""
    previous = get_backend()
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise.

    Functions decorated with this are only dispatched to when
    :func:`use_numba` is true, so the identity fallback never runs hot.
    """
    if HAVE_NUMBA:
        return numba.njit(*args, cache=True, **kwargs)
    if args and callable(args[0]):
        return args[0]

    def wrap(func):
        return func

    return wrap
