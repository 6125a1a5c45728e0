# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the Monte Carlo estimators.

Both kernels accumulate dot products strictly left to right over the
coordinate axis. ``_fallback.py`` reproduces the same order with numpy, so
the two backends agree bit for bit.
"""

from libc.math cimport INFINITY


def max_affine(const double[:, ::1] gamma, const double[:, ::1] points,
               const double[::1] offsets, double[::1] out):
    """out[s] = max_p (<gamma[s], points[p]> - offsets[p])."""
    cdef Py_ssize_t n_samples = gamma.shape[0]
    cdef Py_ssize_t n_points = points.shape[0]
    cdef Py_ssize_t dim = gamma.shape[1]
    cdef Py_ssize_t s, p, d
    cdef double acc, best
    if points.shape[1] != dim:
        raise ValueError("gamma and points disagree on dimension")
    if offsets.shape[0] != n_points or out.shape[0] != n_samples:
        raise ValueError("offsets/out have the wrong length")
    with nogil:
        for s in range(n_samples):
            best = -INFINITY
            for p in range(n_points):
                acc = 0.0
                for d in range(dim):
                    acc = acc + gamma[s, d] * points[p, d]
                acc = acc - offsets[p]
                if acc > best:
                    best = acc
            out[s] = best


def quad_form(const double[:, ::1] gamma, const double[:, ::1] matrix,
              double[::1] out):
    """out[s] = gamma[s]^T matrix gamma[s]."""
    cdef Py_ssize_t n_samples = gamma.shape[0]
    cdef Py_ssize_t dim = gamma.shape[1]
    cdef Py_ssize_t s, i, j
    cdef double inner, total
    if matrix.shape[0] != dim or matrix.shape[1] != dim:
        raise ValueError("matrix must be square with side gamma.shape[1]")
    if out.shape[0] != n_samples:
        raise ValueError("out has the wrong length")
    with nogil:
        for s in range(n_samples):
            total = 0.0
            for i in range(dim):
                inner = 0.0
                for j in range(dim):
                    inner = inner + gamma[s, j] * matrix[i, j]
                total = total + gamma[s, i] * inner
            out[s] = total
