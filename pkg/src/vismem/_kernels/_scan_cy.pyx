# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled top-k scan: single-pass bounded-heap selection per query.

Scans every memory row once per query, accumulating the dot product in
float64 and keeping the k best (distance, row index) pairs in a max-heap,
so no N-sized distance buffer is ever materialized. Queries are
independent and processed in parallel via OpenMP.

Tie rule matches the numpy backend: equal distances resolve to the
smaller row index; identical rows produce identical sums, so ties are
exact.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange

cnp.import_array()


cdef inline bint _worse(double da, long ia, double db, long ib) nogil:
    # true when (da, ia) orders after (db, ib)
    if da != db:
        return da > db
    return ia > ib


cdef void _sift_down(double* hd, long* hi, Py_ssize_t size, Py_ssize_t root) nogil:
    cdef Py_ssize_t child
    cdef double dv = hd[root]
    cdef long iv = hi[root]
    while True:
        child = 2 * root + 1
        if child >= size:
            break
        if child + 1 < size and _worse(hd[child + 1], hi[child + 1], hd[child], hi[child]):
            child += 1
        if _worse(hd[child], hi[child], dv, iv):
            hd[root] = hd[child]
            hi[root] = hi[child]
            root = child
        else:
            break
    hd[root] = dv
    hi[root] = iv


cdef void _scan_one(const float* mat, Py_ssize_t n, Py_ssize_t d,
                    const float* q, Py_ssize_t k,
                    double* hd, long* hi) nogil:
    """Fill hd/hi (length k) with the k best rows, then heap-sort ascending."""
    cdef Py_ssize_t i, j, size = 0
    cdef double acc, dist
    cdef const float* row
    for i in range(n):
        row = mat + i * d
        acc = 0.0
        for j in range(d):
            acc += (<double> row[j]) * (<double> q[j])
        dist = 1.0 - acc
        if dist < 0.0:
            dist = 0.0
        elif dist > 2.0:
            dist = 2.0
        if size < k:
            hd[size] = dist
            hi[size] = i
            size += 1
            if size == k:
                for j in range(k // 2 - 1, -1, -1):
                    _sift_down(hd, hi, k, j)
        elif _worse(hd[0], hi[0], dist, i):
            hd[0] = dist
            hi[0] = i
            _sift_down(hd, hi, k, 0)
    if size < k:
        # k == n path never enters here; guard stays for safety
        for j in range(size // 2 - 1, -1, -1):
            _sift_down(hd, hi, size, j)
    # heap-sort: repeatedly move the worst element to the tail
    cdef double dv
    cdef long iv
    for j in range(size - 1, 0, -1):
        dv = hd[0]
        iv = hi[0]
        hd[0] = hd[j]
        hi[0] = hi[j]
        hd[j] = dv
        hi[j] = iv
        _sift_down(hd, hi, j, 0)


def topk_scan(const float[:, ::1] matrix, const float[:, ::1] queries, k, threads=0,
              row_block=0, query_block=0):
    """Compiled counterpart of the numpy backend's topk_scan.

    Returns (idx int64 (Q, k), dist float64 (Q, k)) sorted ascending by
    (distance, row index). row_block/query_block are accepted for
    interface parity and ignored (the scan is single-pass).
    """
    cdef Py_ssize_t n = matrix.shape[0]
    cdef Py_ssize_t d = matrix.shape[1]
    cdef Py_ssize_t nq = queries.shape[0]
    cdef Py_ssize_t kk = <Py_ssize_t> k
    cdef int nthreads = <int> threads

    if queries.shape[1] != d:
        raise ValueError(f"query dims {queries.shape[1]} != matrix dims {d}")
    if kk < 1 or kk > n:
        raise ValueError(f"k={kk} outside [1, {n}]")

    out_idx = np.empty((nq, kk), dtype=np.int64)
    out_dist = np.empty((nq, kk), dtype=np.float64)
    cdef long[:, ::1] oi = out_idx
    cdef double[:, ::1] od = out_dist
    cdef const float* mat = &matrix[0, 0]
    cdef Py_ssize_t qi

    if nthreads > 0:
        for qi in prange(nq, nogil=True, num_threads=nthreads):
            _scan_one(mat, n, d, &queries[qi, 0], kk, &od[qi, 0], &oi[qi, 0])
    else:
        for qi in prange(nq, nogil=True):
            _scan_one(mat, n, d, &queries[qi, 0], kk, &od[qi, 0], &oi[qi, 0])
    return out_idx, out_dist
