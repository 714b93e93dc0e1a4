# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see _pykernels.py for the reference arithmetic."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef double INV_2_53 = 1.0 / 9007199254740992.0


def xorshift_fill(state, Py_ssize_t n):
    cdef uint64_t x = <uint64_t>(state & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t r
    cdef Py_ssize_t i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        x ^= x >> 12
        x ^= x << 25
        x ^= x >> 27
        r = x * <uint64_t>0x2545F4914F6CDD1D
        o[i] = 2.0 * (<double>(r >> 11) * INV_2_53) - 1.0
    return out, int(x)


cdef void _scores_all(const float[:, ::1] kt, const double[::1] q, double[::1] acc) noexcept nogil:
    cdef Py_ssize_t dim = kt.shape[0], n = kt.shape[1], d, i
    cdef double qd
    for i in range(n):
        acc[i] = 0.0
    for d in range(dim):
        qd = q[d]
        for i in range(n):
            acc[i] = acc[i] + (<double>kt[d, i]) * qd


cdef void _scores_rows(const float[:, ::1] kt, const double[::1] q,
                       const int64_t[::1] rows, double[::1] acc) noexcept nogil:
    cdef Py_ssize_t dim = kt.shape[0], n = rows.shape[0], d, j
    cdef double qd
    for j in range(n):
        acc[j] = 0.0
    for d in range(dim):
        qd = q[d]
        for j in range(n):
            acc[j] = acc[j] + (<double>kt[d, rows[j]]) * qd


def dot_scores(const float[:, ::1] keys_t, query, rows=None):
    cdef const double[::1] q = np.ascontiguousarray(query, dtype=np.float64)
    cdef const int64_t[::1] r
    if rows is None:
        out = np.empty(keys_t.shape[1], dtype=np.float64)
        _scores_all(keys_t, q, out)
    else:
        r = np.ascontiguousarray(rows, dtype=np.int64)
        out = np.empty(r.shape[0], dtype=np.float64)
        _scores_rows(keys_t, q, r, out)
    return out


cdef inline bint _better(double s, int64_t i, double t, int64_t j) noexcept nogil:
    return s > t or (s == t and i < j)


def scan_topk(const float[:, ::1] keys_t, query, Py_ssize_t k, rows=None, Py_ssize_t exclude=-1):
    scores_arr = dot_scores(keys_t, query, rows)
    cdef double[::1] s = scores_arr
    cdef Py_ssize_t n = s.shape[0]
    cdef const int64_t[::1] r
    cdef bint has_rows = rows is not None
    if has_rows:
        r = np.ascontiguousarray(rows, dtype=np.int64)
    if k <= 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    top_i = np.empty(k, dtype=np.int64)
    top_s = np.empty(k, dtype=np.float64)
    cdef int64_t[::1] ti = top_i
    cdef double[::1] ts = top_s
    cdef Py_ssize_t filled = 0, j, p
    cdef int64_t idx
    cdef double sc
    with nogil:
        for j in range(n):
            idx = r[j] if has_rows else j
            if idx == exclude:
                continue
            sc = s[j]
            if filled == k:
                if not _better(sc, idx, ts[k - 1], ti[k - 1]):
                    continue
                p = k - 1
            else:
                p = filled
                filled += 1
            while p > 0 and _better(sc, idx, ts[p - 1], ti[p - 1]):
                ts[p] = ts[p - 1]
                ti[p] = ti[p - 1]
                p -= 1
            ts[p] = sc
            ti[p] = idx
    return top_i[:filled].copy(), top_s[:filled].copy()


def assign_nearest(const float[:, ::1] keys_t, centroids):
    cdef const double[:, ::1] cent = np.ascontiguousarray(centroids, dtype=np.float64)
    cdef Py_ssize_t n = keys_t.shape[1], nc = cent.shape[0], c, i
    labels = np.zeros(n, dtype=np.int64)
    best = np.full(n, -np.inf, dtype=np.float64)
    acc = np.empty(n, dtype=np.float64)
    cdef int64_t[::1] lab = labels
    cdef double[::1] b = best
    cdef double[::1] a = acc
    with nogil:
        for c in range(nc):
            _scores_all(keys_t, cent[c], a)
            for i in range(n):
                if a[i] > b[i]:
                    b[i] = a[i]
                    lab[i] = c
    return labels, best
