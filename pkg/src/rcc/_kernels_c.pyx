# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops over the CSR neighbor structure."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

# aggregator / classifier codes shared with the pure-Python backend
DEF AGG_SUM = 0
DEF AGG_PROPORTION = 1
DEF AGG_MODE = 2
DEF CLF_SIGMOID = 0
DEF CLF_SOFTMAX = 1


def neighbor_sum(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
                 const double[:, ::1] values):
    """out[i] = sum of values[j] over the neighbors j of i."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t k = values.shape[1]
    out_arr = np.zeros((n, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, e, c
    cdef cnp.int64_t j
    with nogil:
        for i in range(n):
            for e in range(indptr[i], indptr[i + 1]):
                j = indices[e]
                for c in range(k):
                    out[i, c] += values[j, c]
    return out_arr


cdef inline void _aggregate_row(const double* counts, double* r, Py_ssize_t k,
                                int agg, double tau_g, cnp.int64_t deg) nogil:
    cdef Py_ssize_t c
    cdef double m, z
    if deg == 0:
        for c in range(k):
            r[c] = 0.0
        return
    if agg == AGG_SUM:
        for c in range(k):
            r[c] = counts[c]
    elif agg == AGG_PROPORTION:
        for c in range(k):
            r[c] = counts[c] / deg
    else:
        m = counts[0]
        for c in range(1, k):
            if counts[c] > m:
                m = counts[c]
        z = 0.0
        for c in range(k):
            r[c] = exp((counts[c] - m) / tau_g)
            z += r[c]
        for c in range(k):
            r[c] /= z


def gibbs_chain(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
                const double[:, ::1] base, const double[:, ::1] theta_r,
                cnp.int64_t[::1] labels, const double[:, ::1] uniforms,
                int clf, double tau_f, int agg, double tau_g, Py_ssize_t burn_in):
    """Run sequential Gibbs sweeps; return per-node label counts after burn-in.

    ``labels`` is updated in place. ``uniforms`` has one row per sweep.
    """
    cdef Py_ssize_t n = base.shape[0]
    cdef Py_ssize_t k = base.shape[1]
    cdef Py_ssize_t sweeps = uniforms.shape[0]
    counts_arr = np.zeros((n, k), dtype=np.float64)
    tally_arr = np.zeros((n, k), dtype=np.float64)
    r_arr = np.zeros(k, dtype=np.float64)
    p_arr = np.zeros(k, dtype=np.float64)
    cdef double[:, ::1] counts = counts_arr
    cdef double[:, ::1] tally = tally_arr
    cdef double[::1] r = r_arr
    cdef double[::1] p = p_arr
    cdef Py_ssize_t s, i, e, c, c2, new
    cdef cnp.int64_t j, old, deg
    cdef double score, m, z, acc, u

    for i in range(n):
        for e in range(indptr[i], indptr[i + 1]):
            counts[i, labels[indices[e]]] += 1.0

    with nogil:
        for s in range(sweeps):
            for i in range(n):
                deg = indptr[i + 1] - indptr[i]
                _aggregate_row(&counts[i, 0], &r[0], k, agg, tau_g, deg)
                for c in range(k):
                    score = base[i, c]
                    for c2 in range(k):
                        score += r[c2] * theta_r[c2, c]
                    p[c] = score
                if clf == CLF_SIGMOID:
                    for c in range(k):
                        p[c] = 1.0 / (1.0 + exp(-p[c]))
                else:
                    m = p[0]
                    for c in range(1, k):
                        if p[c] > m:
                            m = p[c]
                    for c in range(k):
                        p[c] = exp((p[c] - m) / tau_f)
                z = 0.0
                for c in range(k):
                    z += p[c]
                u = uniforms[s, i] * z
                acc = 0.0
                new = k - 1
                for c in range(k):
                    acc += p[c]
                    if u < acc:
                        new = c
                        break
                old = labels[i]
                if new != old:
                    labels[i] = new
                    for e in range(indptr[i], indptr[i + 1]):
                        j = indices[e]
                        counts[j, old] -= 1.0
                        counts[j, new] += 1.0
            if s >= burn_in:
                for i in range(n):
                    tally[i, labels[i]] += 1.0
    return tally_arr
