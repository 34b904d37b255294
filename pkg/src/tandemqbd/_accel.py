"""Backend switch for the hot kernels.

Set ``TANDEMQBD_BACKEND=numpy`` to force the pure-numpy code paths. The
default is ``numba`` when it can be imported.
"""

import os
import warnings

_requested = os.environ.get("TANDEMQBD_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    warnings.warn(f"unknown TANDEMQBD_BACKEND={_requested!r}, using numpy")
    _requested = "numpy"

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn


BACKEND = "numba" if (_requested == "numba" and HAVE_NUMBA) else "numpy"


def use_numba(backend=None):
    """Resolve a per-call backend override against the process default."""
    choice = BACKEND if backend is None else backend
    if choice not in ("numba", "numpy"):
        raise ValueError(f"backend must be 'numba' or 'numpy', got {choice!r}")
    return choice == "numba" and HAVE_NUMBA
