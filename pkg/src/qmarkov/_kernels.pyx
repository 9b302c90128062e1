# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see ``_kernels_py`` for the reference semantics."""
import numpy as np
from libc.math cimport cos, sin

BACKEND = "cython"


cdef bint _augment(Py_ssize_t row, const unsigned char[:, ::1] sup,
                   Py_ssize_t[::1] col_owner, Py_ssize_t[::1] row_match,
                   unsigned char[::1] visited):
    cdef Py_ssize_t n = sup.shape[0]
    cdef Py_ssize_t col
    for col in range(n):
        if sup[row, col] and not visited[col]:
            visited[col] = 1
            if col_owner[col] == -1 or _augment(col_owner[col], sup, col_owner, row_match, visited):
                col_owner[col] = row
                row_match[row] = col
                return True
    return False


def perfect_matching(support):
    sup_arr = np.ascontiguousarray(support, dtype=np.uint8)
    cdef const unsigned char[:, ::1] sup = sup_arr
    cdef Py_ssize_t n = sup.shape[0]
    col_owner_arr = np.full(n, -1, dtype=np.intp)
    row_match_arr = np.full(n, -1, dtype=np.intp)
    visited_arr = np.zeros(n, dtype=np.uint8)
    cdef Py_ssize_t[::1] col_owner = col_owner_arr
    cdef Py_ssize_t[::1] row_match = row_match_arr
    cdef unsigned char[::1] visited = visited_arr
    cdef Py_ssize_t row, k
    for row in range(n):
        for k in range(n):
            visited[k] = 0
        if not _augment(row, sup, col_owner, row_match, visited):
            return None
    return row_match_arr


def bottleneck_matching(residual, double tol):
    residual = np.asarray(residual, dtype=float)
    values = np.unique(residual[residual > tol])
    if values.size == 0:
        return None
    best = perfect_matching(residual >= values[0])
    if best is None:
        return None
    cdef Py_ssize_t lo = 0, hi = values.size - 1, mid
    while lo < hi:
        mid = (lo + hi + 1) // 2
        match = perfect_matching(residual >= values[mid])
        if match is None:
            hi = mid - 1
        else:
            best = match
            lo = mid
    return best


def apply_rotation_tree(state, angles, int num_qubits):
    cdef double complex[::1] st = state
    cdef const double[::1] ang = np.ascontiguousarray(angles, dtype=float)
    cdef Py_ssize_t level, q, half, base, prefix, start, low, i0, i1
    cdef double theta, c, s
    cdef double complex a0, a1
    for level in range(num_qubits):
        q = num_qubits - 1 - level
        half = (<Py_ssize_t>1) << q
        base = ((<Py_ssize_t>1) << level) - 1
        for prefix in range((<Py_ssize_t>1) << level):
            theta = ang[base + prefix]
            if theta == 0.0:
                continue
            c = cos(theta)
            s = sin(theta)
            start = prefix << (q + 1)
            for low in range(half):
                i0 = start | low
                i1 = i0 | half
                a0 = st[i0]
                a1 = st[i1]
                st[i0] = c * a0 - s * a1
                st[i1] = s * a0 + c * a1
    return state


def cross_terms(sqrt_p, matrix):
    cdef const double[::1] sp = np.ascontiguousarray(sqrt_p, dtype=float)
    cdef const double[:, ::1] P = np.ascontiguousarray(matrix, dtype=float)
    cdef Py_ssize_t n = P.shape[0], m = P.shape[1], i, j, k
    out_arr = np.zeros(m)
    cdef double[::1] out = out_arr
    cdef double acc, wi
    for j in range(m):
        acc = 0.0
        for i in range(n):
            wi = sp[i] * P[i, j]
            if wi == 0.0:
                continue
            for k in range(i + 1, n):
                acc += wi * sp[k] * P[k, j]
        out[j] = 2.0 * acc
    return out_arr
