"""Backend switch for the compiled kernels.

Set ``VNTPP_DISABLE_NUMBA=1`` before import to force the pure-numpy
fallbacks everywhere. ``set_backend`` flips the choice at runtime, which the
tests and the benchmark use to compare both paths on identical inputs.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None
    HAVE_NUMBA = False

_disabled = os.environ.get("VNTPP_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}
_backend = "numba" if (HAVE_NUMBA and not _disabled) else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` with caching on, or a no-op decorator when numba is absent."""
    kwargs.setdefault("cache", True)
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


def backend() -> str:
    return _backend


def use_numba() -> bool:
    return _backend == "numba"


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


@contextmanager
def backend_scope(name: str):
    previous = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)
