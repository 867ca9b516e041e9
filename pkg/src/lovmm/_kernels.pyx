# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: template/key correlation and map-cell fusion."""
import numpy as np
cimport numpy as cnp
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


def correlate(double[:, :, :, ::1] templates, double[:, :, ::1] key):
    """Same-size zero-padded correlation of k templates against one key.

    templates: (k, c, c, d); key: (H, W, d). Returns (H, W, k) where
    out[u, v, i] = sum_{a, b, ch} templates[i, a, b, ch] * key[u - c//2 + a, v - c//2 + b, ch].

    Each output row is one GEMM: the row's c x c windows are gathered into a
    (W, c*c*d) matrix that stays in cache and multiplied by the templates.
    """
    cdef int k = templates.shape[0]
    cdef int c = templates.shape[1]
    cdef int d = templates.shape[3]
    cdef int H = key.shape[0]
    cdef int W = key.shape[1]
    if templates.shape[2] != c or key.shape[2] != d:
        raise ValueError("template/key shape mismatch")
    cdef int half = c // 2
    cdef int L = c * d
    cdef int M = c * L
    # (M, k) row-major is the (k, M) column-major operand BLAS expects
    tt_arr = np.ascontiguousarray(np.asarray(templates).reshape(k, M).T)
    cdef double[:, ::1] tt = tt_arr
    kp_arr = np.zeros((H + c, W + c, d), dtype=np.float64)
    kp_arr[half:half + H, half:half + W] = key
    cdef double[:, :, ::1] kp = kp_arr
    x_arr = np.empty((W, M), dtype=np.float64)
    cdef double[:, ::1] x = x_arr
    out_arr = np.zeros((H, W, k), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef int u, v, a
    cdef double one = 1.0, zero = 0.0
    cdef char *no = b"N"
    if k == 0 or H == 0 or W == 0:
        return out_arr
    for u in range(H):
        for v in range(W):
            for a in range(c):
                memcpy(&x[v, a * L], &kp[u + a, v, 0], L * sizeof(double))
        # column-major: out[u]^T (k, W) = tt^T (k, M) @ x^T (M, W)
        dgemm(no, no, &k, &W, &M, &one, &tt[0, 0], &k, &x[0, 0], &M, &zero, &out[u, 0, 0], &k)
    return out_arr


def accumulate_cells(cnp.int64_t[::1] cells, double[:, ::1] emb, double[::1] z,
                     double[:, ::1] sums, cnp.int64_t[::1] counts, double[::1] heights):
    """In-place scatter: sums[cell] += emb, counts[cell] += 1, heights[cell] = max(z)."""
    cdef Py_ssize_t n = cells.shape[0]
    cdef Py_ssize_t C = emb.shape[1]
    cdef Py_ssize_t p, j, cell
    for p in range(n):
        cell = cells[p]
        for j in range(C):
            sums[cell, j] += emb[p, j]
        if counts[cell] == 0 or z[p] > heights[cell]:
            heights[cell] = z[p]
        counts[cell] += 1
