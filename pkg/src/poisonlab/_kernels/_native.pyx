# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot loops: Gram-operator power iteration and centroid assignment.

Mirrors the contracts of _pure; the package selects between them at import.
"""

from libc.math cimport sqrt

import numpy as np


def power_iteration(a_in, v0_in, double tol, int max_iters):
    a_arr = np.ascontiguousarray(a_in, dtype=np.float64)
    v_arr = np.array(v0_in, dtype=np.float64, copy=True)
    cdef double[:, ::1] a = a_arr
    cdef double[::1] v = v_arr
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t d = a.shape[1]
    y_arr = np.empty(n, dtype=np.float64)
    w_arr = np.empty(d, dtype=np.float64)
    cdef double[::1] y = y_arr
    cdef double[::1] w = w_arr
    cdef Py_ssize_t i, j
    cdef int iteration
    cdef double norm, acc, diff_minus, diff_plus, delta

    norm = 0.0
    for j in range(d):
        norm += v[j] * v[j]
    norm = sqrt(norm)
    if norm == 0.0:
        raise ValueError("start vector is zero")
    for j in range(d):
        v[j] /= norm

    for iteration in range(1, max_iters + 1):
        # y = A v
        for i in range(n):
            acc = 0.0
            for j in range(d):
                acc += a[i, j] * v[j]
            y[i] = acc
        # w = A^T y
        for j in range(d):
            w[j] = 0.0
        for i in range(n):
            acc = y[i]
            for j in range(d):
                w[j] += a[i, j] * acc
        norm = 0.0
        for j in range(d):
            norm += w[j] * w[j]
        norm = sqrt(norm)
        if norm == 0.0:
            return v_arr, iteration, True
        diff_minus = 0.0
        diff_plus = 0.0
        for j in range(d):
            w[j] /= norm
            diff_minus += (w[j] - v[j]) * (w[j] - v[j])
            diff_plus += (w[j] + v[j]) * (w[j] + v[j])
        delta = sqrt(diff_minus if diff_minus < diff_plus else diff_plus)
        for j in range(d):
            v[j] = w[j]
        if delta < tol:
            return v_arr, iteration, True
    return v_arr, max_iters, False


def nearest_centroids(x_in, c_in):
    x_arr = np.ascontiguousarray(x_in, dtype=np.float64)
    c_arr = np.ascontiguousarray(c_in, dtype=np.float64)
    cdef double[:, ::1] x = x_arr
    cdef double[:, ::1] c = c_arr
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t k = c.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    if c.shape[1] != d:
        raise ValueError("dimension mismatch between points and centroids")
    labels_arr = np.empty(n, dtype=np.int64)
    dists_arr = np.empty(n, dtype=np.float64)
    cdef long long[::1] labels = labels_arr
    cdef double[::1] dists = dists_arr
    cdef Py_ssize_t i, j, m
    cdef double best, acc, diff
    cdef Py_ssize_t best_idx

    for i in range(n):
        best = -1.0
        best_idx = 0
        for j in range(k):
            acc = 0.0
            for m in range(d):
                diff = x[i, m] - c[j, m]
                acc += diff * diff
            if best < 0.0 or acc < best:
                best = acc
                best_idx = j
        labels[i] = best_idx
        dists[i] = best
    return labels_arr, dists_arr
