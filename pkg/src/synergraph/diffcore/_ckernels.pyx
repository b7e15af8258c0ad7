# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled scatter/segment kernels used by graph message passing.

Every loop walks the index array in order so results are bit-identical to the
numpy fallback in ``_pykernels``.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def scatter_add_rows(const double[:, ::1] src, const long long[::1] index, Py_ssize_t n):
    cdef Py_ssize_t e, k, row
    cdef Py_ssize_t n_edges = src.shape[0]
    cdef Py_ssize_t width = src.shape[1]
    out_arr = np.zeros((n, width), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for e in range(n_edges):
        row = index[e]
        if row < 0 or row >= n:
            raise IndexError("scatter index %d out of range for %d segments" % (row, n))
        for k in range(width):
            out[row, k] += src[e, k]
    return out_arr


def segment_max(const double[::1] src, const long long[::1] index, Py_ssize_t n):
    cdef Py_ssize_t e, row
    cdef Py_ssize_t n_edges = src.shape[0]
    out_arr = np.full(n, -np.inf, dtype=np.float64)
    cdef double[::1] out = out_arr
    for e in range(n_edges):
        row = index[e]
        if row < 0 or row >= n:
            raise IndexError("segment index %d out of range for %d segments" % (row, n))
        if src[e] > out[row]:
            out[row] = src[e]
    return out_arr


def segment_softmax(const double[::1] scores, const long long[::1] index, Py_ssize_t n):
    cdef Py_ssize_t e
    cdef Py_ssize_t n_edges = scores.shape[0]
    cdef double[::1] mx = segment_max(scores, index, n)
    shifted_arr = np.empty(n_edges, dtype=np.float64)
    cdef double[::1] shifted = shifted_arr
    for e in range(n_edges):
        shifted[e] = scores[e] - mx[index[e]]
    # numpy exp on both paths keeps parity with the fallback
    ex_arr = np.exp(shifted_arr)
    cdef double[::1] ex = ex_arr
    denom_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] denom = denom_arr
    for e in range(n_edges):
        denom[index[e]] += ex[e]
    out_arr = np.empty(n_edges, dtype=np.float64)
    cdef double[::1] out = out_arr
    for e in range(n_edges):
        out[e] = ex[e] / denom[index[e]]
    return out_arr
