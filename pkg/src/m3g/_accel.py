"""Backend selection for the hot kernels.

Every kernel in :mod:`m3g.kernels` exists twice: a loop version compiled with
numba and a vectorised numpy version. Numba is used when it is importable
unless ``M3G_DISABLE_NUMBA`` is set to a truthy value at import time.
"""
from __future__ import annotations

import os

try:
    import numba as _numba
except ImportError:  # pragma: no cover - exercised only without numba
    _numba = None

HAVE_NUMBA = _numba is not None


def _disabled_by_env() -> bool:
    return os.environ.get("M3G_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = HAVE_NUMBA and not _disabled_by_env()
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(fn):
    """Compile ``fn`` in nopython mode, or return ``None`` without numba."""
    if not HAVE_NUMBA:
        return None
    return _numba.njit(cache=True, nogil=True)(fn)


def pick(numba_impl, numpy_impl):
    return numba_impl if (USE_NUMBA and numba_impl is not None) else numpy_impl
