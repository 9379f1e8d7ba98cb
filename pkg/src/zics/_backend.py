"""Select the numba or pure-numpy backend for the hot kernels.

Set ``ZICS_BACKEND=numpy`` before import to bypass numba entirely. The default is
``numba`` when it is importable.
"""
import os

_requested = os.environ.get("ZICS_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"ZICS_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

USE_NUMBA = False
if _requested == "numba":
    # skip probing the system TBB, which may be too old and only produces a warning
    os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
    try:
        import numba

        USE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a hard dependency in practice
        USE_NUMBA = False

BACKEND = "numba" if USE_NUMBA else "numpy"


if USE_NUMBA:

    def njit(*args, **kwargs):
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)

    prange = numba.prange
else:

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

    prange = range


def set_threads(n):
    """Cap the worker count used by parallel kernels. Returns the effective count."""
    n = max(1, int(n))
    if USE_NUMBA:
        n = min(n, numba.config.NUMBA_NUM_THREADS)
        numba.set_num_threads(n)
        return n
    return 1


def default_threads():
    env = os.environ.get("ZICS_THREADS")
    if env:
        return int(env)
    return os.cpu_count() or 1
