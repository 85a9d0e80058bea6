"""Pure-Python fallback for the compiled recursion kernels."""
from __future__ import annotations

import numpy as np


def lti_scan(A: np.ndarray, drive: np.ndarray, x0: np.ndarray) -> np.ndarray:
    n, T = drive.shape
    X = np.empty((n, T + 1))
    X[:, 0] = x0
    x = X[:, 0]
    for k in range(T):
        x = A @ x + drive[:, k]
        X[:, k + 1] = x
    return X


def lti_step(A: np.ndarray, x: np.ndarray, d: np.ndarray, out: np.ndarray) -> None:
    np.add(A @ x, d, out=out)
