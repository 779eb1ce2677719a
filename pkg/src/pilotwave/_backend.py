"""Backend selection for the hot numeric kernels.

The kernels are written twice: loop-style code compiled with numba, and a
vectorised pure-numpy path.  ``PILOTWAVE_NUMBA=0`` (or a missing numba
install) selects the numpy path at import time.
"""
import os

# the TBB layer shipped in some images is too old for numba; avoid the warning
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_FLAG = os.environ.get("PILOTWAVE_NUMBA", "1").strip().lower()
NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and _FLAG not in ("0", "false", "no", "off")
DEFAULT_BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, otherwise an identity decorator."""
    if USE_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


if USE_NUMBA:
    prange = numba.prange
else:
    prange = range


def set_num_threads(n):
    if USE_NUMBA and n:
        numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))
