# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled state recursion x(k+1) = A x(k) + d(k)."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def lti_scan(const double[:, ::1] A, const double[:, ::1] drive, const double[::1] x0):
    """Return the state trajectory of shape (n, T + 1) for drive of shape (n, T)."""
    cdef Py_ssize_t n = A.shape[0]
    cdef Py_ssize_t T = drive.shape[1]
    cdef Py_ssize_t k, r, c
    cdef double acc
    out = np.empty((n, T + 1), dtype=np.float64)
    cdef double[:, ::1] X = out
    for r in range(n):
        X[r, 0] = x0[r]
    for k in range(T):
        for r in range(n):
            acc = drive[r, k]
            for c in range(n):
                acc += A[r, c] * X[c, k]
            X[r, k + 1] = acc
    return out


def lti_step(const double[:, ::1] A, const double[::1] x, const double[::1] d, double[::1] out):
    """Single step out = A x + d, no allocation."""
    cdef Py_ssize_t n = A.shape[0]
    cdef Py_ssize_t r, c
    cdef double acc
    for r in range(n):
        acc = d[r]
        for c in range(n):
            acc += A[r, c] * x[c]
        out[r] = acc
