"""Numba switch.

Kernels are compiled with numba when it is importable and the environment
variable ``SNOOPBIAS_NUMBA`` is not set to ``0``. Otherwise the pure-numpy
implementations in :mod:`snoopbias.kernels` are used.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and os.environ.get("SNOOPBIAS_NUMBA", "1") != "0"


def njit(func):
    """Compile ``func`` in nopython mode, or return it unchanged."""
    if numba is None:  # pragma: no cover
        return func
    return numba.njit(cache=True, nogil=True)(func)


def backend():
    return "numba" if USE_NUMBA else "numpy"
