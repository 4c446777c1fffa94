"""Kernel backend selection.

Set ``RINGFLOW_BACKEND=numpy`` to force the pure-numpy kernels; the default
uses numba when it imports cleanly.
"""

import os

BACKEND_ENV = "RINGFLOW_BACKEND"


def _numba_usable():
    if os.environ.get(BACKEND_ENV, "numba").strip().lower() == "numpy":
        return False
    try:
        import numba  # noqa: F401
    except Exception:
        return False
    return True


USE_NUMBA = _numba_usable()


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    The decorated function is always compiled if numba is present, even when
    the numpy backend is selected, so both paths stay testable side by side.
    """
    try:
        import numba
    except Exception:
        numba = None

    if numba is None:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
