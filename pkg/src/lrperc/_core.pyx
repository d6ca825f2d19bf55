# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: union-find labeling and conductance-weighted walks.

Every function here has a line-for-line twin in ``_pycore.py``; both must
return identical results for identical inputs.
"""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t, uint8_t

cnp.import_array()


cdef inline int64_t _find(int64_t[::1] parent, int64_t x) noexcept nogil:
    cdef int64_t root = x
    cdef int64_t nxt
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


def label_components(int64_t n, bonds):
    """Canonical component root (smallest site index) for every site."""
    cdef int64_t[:, ::1] b = np.ascontiguousarray(bonds, dtype=np.int64).reshape(-1, 2)
    cdef int64_t[::1] parent = np.arange(n, dtype=np.int64)
    cdef int64_t[::1] size = np.ones(n, dtype=np.int64)
    out = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] root = out
    cdef int64_t[::1] canon = np.full(n, -1, dtype=np.int64)
    cdef Py_ssize_t i, m = b.shape[0]
    cdef int64_t ra, rb, r
    with nogil:
        for i in range(m):
            ra = _find(parent, b[i, 0])
            rb = _find(parent, b[i, 1])
            if ra == rb:
                continue
            if size[ra] < size[rb]:
                ra, rb = rb, ra
            parent[rb] = ra
            size[ra] += size[rb]
        for i in range(n):
            r = _find(parent, i)
            if canon[r] < 0:
                canon[r] = i
            root[i] = canon[r]
    return out


cdef inline int64_t _step(const int64_t[::1] indptr, const int64_t[::1] indices,
                          const double[::1] cumw, int64_t v, double u) noexcept nogil:
    cdef int64_t lo = indptr[v], hi = indptr[v + 1]
    cdef double target = u * cumw[hi - 1]
    cdef int64_t a = lo, b = hi, mid
    # first j in [lo, hi) with cumw[j] > target
    while a < b:
        mid = (a + b) // 2
        if cumw[mid] > target:
            b = mid
        else:
            a = mid + 1
    if a >= hi:
        a = hi - 1
    return indices[a]


def walk_path(indptr, indices, cumw, int64_t start, uniforms):
    """Positions visited by a walk that consumes one uniform per step."""
    cdef const int64_t[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const int64_t[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const double[::1] cw = np.ascontiguousarray(cumw, dtype=np.float64)
    cdef const double[::1] us = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t i, n = us.shape[0]
    out = np.empty(n + 1, dtype=np.int64)
    cdef int64_t[::1] pos = out
    cdef int64_t v = start
    pos[0] = v
    with nogil:
        for i in range(n):
            v = _step(ip, ix, cw, v, us[i])
            pos[i + 1] = v
    return out


def walk_until(indptr, indices, cumw, int64_t pos, int64_t start, stop_mask, uniforms):
    """Walk from ``pos`` until it enters ``stop_mask`` or comes back to ``start``.

    Returns ``(status, steps, position)`` with status 1 for a stop-set hit,
    2 for a return to ``start`` and 0 when the uniforms ran out.
    """
    cdef const int64_t[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const int64_t[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const double[::1] cw = np.ascontiguousarray(cumw, dtype=np.float64)
    cdef const uint8_t[::1] stop = np.ascontiguousarray(stop_mask, dtype=np.uint8)
    cdef const double[::1] us = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t i, n = us.shape[0]
    cdef int64_t v = pos
    cdef int status = 0
    cdef Py_ssize_t steps = 0
    with nogil:
        for i in range(n):
            v = _step(ip, ix, cw, v, us[i])
            steps = i + 1
            if stop[v]:
                status = 1
                break
            if v == start:
                status = 2
                break
    return status, steps, v
