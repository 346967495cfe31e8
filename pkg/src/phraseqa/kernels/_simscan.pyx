# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled scan kernels: row-wise inner products and sparse merge dots.

Accumulation is sequential in float64 per row, so a row's score depends only
on that row and the query -- probed scans and exhaustive scans agree bit for
bit, row by row.
"""

import numpy as np

cimport numpy as cnp


def dot_scores(const float[:, ::1] mat, const float[::1] q):
    cdef Py_ssize_t n = mat.shape[0]
    cdef Py_ssize_t d = mat.shape[1]
    if q.shape[0] != d:
        raise ValueError(f"shape mismatch: mat ({n}, {d}) vs q ({q.shape[0]},)")
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(n):
        acc = 0.0
        for j in range(d):
            acc += (<double> mat[i, j]) * (<double> q[j])
        o[i] = acc
    return out


def gather_dot_scores(const float[:, ::1] mat, const cnp.int64_t[::1] ids, const float[::1] q):
    cdef Py_ssize_t n = mat.shape[0]
    cdef Py_ssize_t d = mat.shape[1]
    cdef Py_ssize_t m = ids.shape[0]
    if q.shape[0] != d:
        raise ValueError(f"shape mismatch: mat ({n}, {d}) vs q ({q.shape[0]},)")
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, j, row
    cdef double acc
    for i in range(m):
        row = ids[i]
        if row < 0 or row >= n:
            raise IndexError(f"row id {row} out of range [0, {n})")
        acc = 0.0
        for j in range(d):
            acc += (<double> mat[row, j]) * (<double> q[j])
        o[i] = acc
    return out


def sparse_dot(const cnp.int64_t[::1] a_ids, const double[::1] a_w,
               const cnp.int64_t[::1] b_ids, const double[::1] b_w):
    cdef Py_ssize_t i = 0, j = 0
    cdef Py_ssize_t na = a_ids.shape[0], nb = b_ids.shape[0]
    cdef double acc = 0.0
    while i < na and j < nb:
        if a_ids[i] == b_ids[j]:
            acc += a_w[i] * b_w[j]
            i += 1
            j += 1
        elif a_ids[i] < b_ids[j]:
            i += 1
        else:
            j += 1
    return acc
