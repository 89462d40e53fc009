# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled backend for the hot numeric kernels.

Operation order matches kernels._ref exactly; results are bit-identical.
"""

import numpy as np

from libc.math cimport fabs, isfinite

NAME = "compiled"


def lift(const double[::1] v, int max_power):
    cdef Py_ssize_t d = v.shape[0]
    out_arr = np.empty((max_power + 1) * d, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t k, i
    with nogil:
        for i in range(d):
            out[i] = 1.0
        for k in range(1, max_power + 1):
            for i in range(d):
                out[k * d + i] = out[(k - 1) * d + i] * v[i]
    return out_arr


def lift_mean(const double[:, ::1] mat, int max_power):
    cdef Py_ssize_t n = mat.shape[0]
    cdef Py_ssize_t d = mat.shape[1]
    cdef Py_ssize_t width = (max_power + 1) * d
    acc_arr = np.zeros(width, dtype=np.float64)
    tmp_arr = np.empty(width, dtype=np.float64)
    cdef double[::1] acc = acc_arr
    cdef double[::1] tmp = tmp_arr
    cdef Py_ssize_t r, k, i
    with nogil:
        for r in range(n):
            for i in range(d):
                tmp[i] = 1.0
            for k in range(1, max_power + 1):
                for i in range(d):
                    tmp[k * d + i] = tmp[(k - 1) * d + i] * mat[r, i]
            for i in range(width):
                acc[i] = acc[i] + tmp[i]
        for i in range(width):
            acc[i] = acc[i] / (<double> n)
    return acc_arr


def prox_solve(const double[::1] d, const double[::1] target, const double[::1] alpha0,
               double lr, double l1, double tol, long max_iters):
    cdef Py_ssize_t n = d.shape[0]
    a_arr = np.asarray(alpha0).copy()
    cdef double[::1] a = a_arr
    cdef double thr = lr * l1
    cdef double g_prev, g_new, q, s, r, grad, x, dec
    cdef Py_ssize_t k
    cdef long step, steps = 0, diverged = -1

    q = 0.0
    s = 0.0
    for k in range(n):
        r = target[k] - a[k] * d[k]
        q += r * r
        s += fabs(a[k])
    g_prev = q + l1 * s
    if not isfinite(g_prev):
        return a_arr, g_prev, 0, 0

    with nogil:
        for step in range(1, max_iters + 1):
            for k in range(n):
                grad = -2.0 * d[k] * (target[k] - a[k] * d[k])
                x = a[k] - lr * grad
                if x > thr:
                    a[k] = x - thr
                elif x < -thr:
                    a[k] = x + thr
                else:
                    a[k] = 0.0
            q = 0.0
            s = 0.0
            for k in range(n):
                r = target[k] - a[k] * d[k]
                q += r * r
                s += fabs(a[k])
            g_new = q + l1 * s
            steps = step
            if not isfinite(g_new):
                diverged = step
                g_prev = g_new
                break
            dec = g_prev - g_new
            g_prev = g_new
            if fabs(dec) < tol:
                break
    return a_arr, g_prev, steps, diverged
