"""Pure-Python reference kernels.

These mirror ``_kernels.pyx`` line for line and are used whenever the
compiled extension is unavailable (or ``QMARKOV_PURE_PYTHON=1``).
"""
from __future__ import annotations

import math

import numpy as np

BACKEND = "python"


def _augment(row, adj, col_owner, row_match, visited):
    for col in adj[row]:
        if visited[col]:
            continue
        visited[col] = True
        if col_owner[col] == -1 or _augment(col_owner[col], adj, col_owner, row_match, visited):
            col_owner[col] = row
            row_match[row] = col
            return True
    return False


def perfect_matching(support):
    """Kuhn's augmenting-path matching on a square boolean support.

    Returns ``match`` with ``match[row] = col`` for a perfect matching, or
    ``None`` when none exists.
    """
    support = np.asarray(support, dtype=bool)
    n = support.shape[0]
    adj = [np.flatnonzero(support[i]).tolist() for i in range(n)]
    col_owner = [-1] * n
    row_match = [-1] * n
    for row in range(n):
        if not _augment(row, adj, col_owner, row_match, [False] * n):
            return None
    return np.asarray(row_match, dtype=np.intp)


def bottleneck_matching(residual, tol):
    """Perfect matching inside ``residual > tol`` maximising its smallest entry.

    Binary search over the distinct entry values; returns ``None`` if the
    support has no perfect matching at all.
    """
    residual = np.asarray(residual, dtype=float)
    values = np.unique(residual[residual > tol])
    if values.size == 0:
        return None
    best = perfect_matching(residual >= values[0])
    if best is None:
        return None
    lo, hi = 0, values.size - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        match = perfect_matching(residual >= values[mid])
        if match is None:
            hi = mid - 1
        else:
            best, lo = match, mid
    return best


def apply_rotation_tree(state, angles, num_qubits):
    """Apply the multiplexed R_y tree in place.

    ``angles`` is heap-ordered: level ``k`` (acting on qubit
    ``num_qubits - 1 - k``) occupies ``angles[2**k - 1 : 2**(k+1) - 1]``,
    indexed by the value of the already-fixed higher bits. Each node applies
    ``R_y(2*theta)``.
    """
    for level in range(num_qubits):
        q = num_qubits - 1 - level
        half = 1 << q
        base = (1 << level) - 1
        for prefix in range(1 << level):
            theta = angles[base + prefix]
            if theta == 0.0:
                continue
            c = math.cos(theta)
            s = math.sin(theta)
            start = prefix << (q + 1)
            for low in range(half):
                i0 = start | low
                i1 = i0 | half
                a0 = state[i0]
                a1 = state[i1]
                state[i0] = c * a0 - s * a1
                state[i1] = s * a0 + c * a1
    return state


def cross_terms(sqrt_p, matrix):
    """``out[j] = 2 * sum_{i<k} sqrt_p[i] sqrt_p[k] P[i,j] P[k,j]``."""
    sqrt_p = np.asarray(sqrt_p, dtype=float)
    matrix = np.asarray(matrix, dtype=float)
    n, m = matrix.shape
    out = np.zeros(m)
    for j in range(m):
        acc = 0.0
        for i in range(n):
            wi = sqrt_p[i] * matrix[i, j]
            if wi == 0.0:
                continue
            for k in range(i + 1, n):
                acc += wi * sqrt_p[k] * matrix[k, j]
        out[j] = 2.0 * acc
    return out
