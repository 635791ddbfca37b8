# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: Poincare distances, ragged segment reductions, pair counts."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, log, INFINITY

cnp.import_array()

BACKEND = "cython"


def poincare_distance_pairs(const double[:, ::1] E, const long[::1] I, const long[::1] J):
    cdef Py_ssize_t n = I.shape[0], d = E.shape[1], k, c
    cdef double xx, yy, diff, t, gamma
    out = np.empty(n)
    cdef double[::1] o = out
    for k in range(n):
        xx = 0.0
        yy = 0.0
        diff = 0.0
        for c in range(d):
            xx += E[I[k], c] * E[I[k], c]
            yy += E[J[k], c] * E[J[k], c]
            t = E[I[k], c] - E[J[k], c]
            diff += t * t
        gamma = 1.0 + 2.0 * diff / ((1.0 - xx) * (1.0 - yy))
        if gamma < 1.0:
            gamma = 1.0
        o[k] = log(gamma + sqrt(gamma * gamma - 1.0))
    return out


def poincare_distance_pairs_grad(const double[:, ::1] E, const long[::1] I, const long[::1] J,
                                 const double[::1] gd, double[:, ::1] out):
    cdef Py_ssize_t n = I.shape[0], d = E.shape[1], k, c
    cdef long i, j
    cdef double xx, yy, diff, t, a, b, gm1, coef
    for k in range(n):
        if gd[k] == 0.0:
            continue
        i = I[k]
        j = J[k]
        xx = 0.0
        yy = 0.0
        diff = 0.0
        for c in range(d):
            xx += E[i, c] * E[i, c]
            yy += E[j, c] * E[j, c]
            t = E[i, c] - E[j, c]
            diff += t * t
        if diff <= 0.0:
            continue
        a = 1.0 - xx
        b = 1.0 - yy
        gm1 = 2.0 * diff / (a * b)
        coef = gd[k] * 4.0 / (a * b * sqrt(gm1 * (gm1 + 2.0)))
        for c in range(d):
            t = E[i, c] - E[j, c]
            out[i, c] += coef * (t + diff / a * E[i, c])
            out[j, c] += coef * (-t + diff / b * E[j, c])


def segment_sum(const double[:, ::1] X, const long[::1] seg, Py_ssize_t nseg):
    cdef Py_ssize_t n = X.shape[0], m = X.shape[1], k, c
    out = np.zeros((nseg, m))
    cdef double[:, ::1] o = out
    for k in range(n):
        for c in range(m):
            o[seg[k], c] += X[k, c]
    return out


def segment_softmax(const double[:, ::1] S, const long[::1] seg, Py_ssize_t nseg):
    cdef Py_ssize_t n = S.shape[0], m = S.shape[1], k, c
    mx_arr = np.full((nseg, m), -INFINITY)
    tot_arr = np.zeros((nseg, m))
    out = np.empty((n, m))
    cdef double[:, ::1] mx = mx_arr
    cdef double[:, ::1] tot = tot_arr
    cdef double[:, ::1] o = out
    for k in range(n):
        for c in range(m):
            if S[k, c] > mx[seg[k], c]:
                mx[seg[k], c] = S[k, c]
    for k in range(n):
        for c in range(m):
            o[k, c] = exp(S[k, c] - mx[seg[k], c])
            tot[seg[k], c] += o[k, c]
    for k in range(n):
        for c in range(m):
            o[k, c] /= tot[seg[k], c]
    return out


def segment_softmax_grad(const double[:, ::1] P, const double[:, ::1] G,
                         const long[::1] seg, Py_ssize_t nseg):
    cdef Py_ssize_t n = P.shape[0], m = P.shape[1], k, c
    dot_arr = np.zeros((nseg, m))
    out = np.empty((n, m))
    cdef double[:, ::1] dot = dot_arr
    cdef double[:, ::1] o = out
    for k in range(n):
        for c in range(m):
            dot[seg[k], c] += P[k, c] * G[k, c]
    for k in range(n):
        for c in range(m):
            o[k, c] = P[k, c] * (G[k, c] - dot[seg[k], c])
    return out


def cooccurrence_counts(const long[::1] indptr, const long[::1] codes, Py_ssize_t n):
    cdef Py_ssize_t nadm = indptr.shape[0] - 1, r, p, q, cnt
    B = np.zeros((n, n), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] b = B
    # per-admission dedup marker: stamp[c] == r means c already seen in admission r
    stamp_arr = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] stamp = stamp_arr
    buf_arr = np.empty(max(codes.shape[0], 1), dtype=np.int64)
    cdef cnp.int64_t[::1] buf = buf_arr
    for r in range(nadm):
        cnt = 0
        for p in range(indptr[r], indptr[r + 1]):
            if stamp[codes[p]] != r:
                stamp[codes[p]] = r
                buf[cnt] = codes[p]
                cnt += 1
        for p in range(cnt):
            for q in range(p + 1, cnt):
                b[buf[p], buf[q]] += 1
                b[buf[q], buf[p]] += 1
    return B
