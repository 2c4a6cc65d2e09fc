# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled kNN labeling kernel.

Same contract as the numpy fallback: squared Euclidean distances, neighbor
selection by (distance, insertion index), majority vote with ties broken by
smaller summed neighbor distance then smaller class index. Each query's
distances accumulate sequentially per stored point, so results do not depend
on the OpenMP thread count.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport INFINITY

cnp.import_array()

cdef enum:
    MAXK = 64
    NCLS = 4


cdef int _predict_one(const double* P, const cnp.int32_t* L, Py_ssize_t n,
                      Py_ssize_t d, const double* q, int k) noexcept nogil:
    cdef double nd[MAXK]
    cdef Py_ssize_t ni[MAXK]
    cdef int counts[NCLS]
    cdef double totals[NCLS]
    cdef Py_ssize_t j, f, base
    cdef int cnt = 0, pos, c, best
    cdef double s, diff, worst = INFINITY

    for j in range(n):
        base = j * d
        s = 0.0
        for f in range(d):
            diff = q[f] - P[base + f]
            s += diff * diff
            if s > worst:
                break
        if s > worst:
            continue
        if cnt == k:
            # equal k-th distance loses to the earlier insertion index
            if s >= worst:
                continue
            pos = k - 1
        else:
            pos = cnt
            cnt += 1
        while pos > 0 and nd[pos - 1] > s:
            nd[pos] = nd[pos - 1]
            ni[pos] = ni[pos - 1]
            pos -= 1
        nd[pos] = s
        ni[pos] = j
        if cnt == k:
            worst = nd[k - 1]

    for c in range(NCLS):
        counts[c] = 0
        totals[c] = 0.0
    for pos in range(k):
        c = L[ni[pos]]
        counts[c] += 1
        totals[c] += nd[pos]
    best = 0
    for c in range(1, NCLS):
        if counts[c] > counts[best] or (
            counts[c] == counts[best] and totals[c] < totals[best]
        ):
            best = c
    return best


def knn_label_batch(const double[:, ::1] points, const cnp.int32_t[::1] labels,
                    const double[:, ::1] queries, int k, int num_threads=0):
    """Predict int32 labels for each query row (compiled backend).

    k must not exceed MAXK (64); the caller routes larger k to the numpy
    backend. num_threads <= 0 uses the OpenMP default.
    """
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t m = queries.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if k > MAXK:
        raise ValueError(f"compiled kernel supports k <= {MAXK}, got {k}")
    if queries.shape[1] != d:
        raise ValueError("points and queries disagree on feature count")
    if labels.shape[0] != n:
        raise ValueError("labels length must match points")

    out = np.empty(m, dtype=np.int32)
    cdef cnp.int32_t[::1] ov = out
    if m == 0:
        return out

    cdef const double* P = &points[0, 0]
    cdef const cnp.int32_t* L = &labels[0]
    cdef Py_ssize_t i
    if num_threads > 0:
        for i in prange(m, nogil=True, schedule="static", num_threads=num_threads):
            ov[i] = <cnp.int32_t> _predict_one(P, L, n, d, &queries[i, 0], k)
    else:
        for i in prange(m, nogil=True, schedule="static"):
            ov[i] = <cnp.int32_t> _predict_one(P, L, n, d, &queries[i, 0], k)
    return out
