"""Backend selection for the state-recursion kernels.

The compiled extension ``ddfdie._scan`` is used when it was built; otherwise the
NumPy loop in ``ddfdie._scan_py`` is used. Set ``DDFDIE_PURE_PYTHON=1`` to force
the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _scan_py

try:
    if os.environ.get("DDFDIE_PURE_PYTHON"):
        raise ImportError("pure-Python backend forced")
    from . import _scan as _compiled
except ImportError:
    _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def _impl(backend: str | None):
    backend = backend or BACKEND
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available in this build")
        return _compiled
    if backend == "python":
        return _scan_py
    raise ValueError(f"unknown backend {backend!r}")


def lti_scan(A, drive, x0=None, backend: str | None = None) -> np.ndarray:
    """Iterate ``x(k+1) = A x(k) + drive[:, k]`` and return all states.

    Parameters
    ----------
    A : (n, n) array
    drive : (n, T) array
        Precomputed input contribution for every step.
    x0 : (n,) array, optional
        Initial state, zero by default.

    Returns
    -------
    (n, T + 1) array whose column ``k`` is ``x(k)``.
    """
    A = np.ascontiguousarray(A, dtype=float)
    drive = np.ascontiguousarray(drive, dtype=float)
    n = A.shape[0]
    if drive.ndim != 2 or drive.shape[0] != n:
        raise ValueError(f"drive must have shape ({n}, T), got {drive.shape}")
    x0 = np.zeros(n) if x0 is None else np.ascontiguousarray(x0, dtype=float).reshape(n)
    return _impl(backend).lti_scan(A, drive, x0)


def lti_step(A, x, d, out, backend: str | None = None) -> None:
    """In-place single step ``out = A x + d`` (all float64, C-contiguous)."""
    _impl(backend).lti_step(A, x, d, out)
