"""Backend selection for the compiled kernels.

The hot loops (wave time stepping, Yosida-approximated integration) exist
in two flavours: a numba ``@njit`` kernel and a pure numpy/scipy path.
``DECAYLAB_BACKEND=numpy`` forces the fallback; ``numba`` (the default)
uses the compiled kernels whenever numba imports cleanly.
"""

import os

from .errors import UsageError

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency
    numba = None
    HAVE_NUMBA = False

BACKENDS = ("numba", "numpy")


def default_backend() -> str:
    name = os.environ.get("DECAYLAB_BACKEND", "numba").strip().lower()
    if name not in BACKENDS:
        raise UsageError(f"DECAYLAB_BACKEND must be one of {BACKENDS}, got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        return "numpy"
    return name


def resolve_backend(backend: str | None = None) -> str:
    if backend is None:
        return default_backend()
    if backend not in BACKENDS:
        raise UsageError(f"backend must be one of {BACKENDS}, got {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        return "numpy"
    return backend


def njit(fn):
    """Compile ``fn`` with numba when available; the Python function stays
    reachable as ``fn.py_func`` either way."""
    if not HAVE_NUMBA:
        fn.py_func = fn
        return fn
    return numba.njit(cache=True)(fn)
