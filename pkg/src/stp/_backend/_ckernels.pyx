# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled float64 twins of the numpy kernels.

Same contracts as stp._backend.numpy_kernels; the masked softmax skips
masked tail entries entirely (the staircase mask advantage) instead of
computing and discarding them.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()

NAME = "compiled"


def softmax_rows_fwd(cnp.float64_t[:, ::1] x):
    cdef Py_ssize_t rows = x.shape[0], cols = x.shape[1]
    out_arr = np.empty((rows, cols), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double m, s
    for i in range(rows):
        m = x[i, 0]
        for j in range(1, cols):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(cols):
            out[i, j] = exp(x[i, j] - m)
            s += out[i, j]
        for j in range(cols):
            out[i, j] /= s
    return out_arr


def softmax_rows_bwd(cnp.float64_t[:, ::1] y, cnp.float64_t[:, ::1] gy):
    cdef Py_ssize_t rows = y.shape[0], cols = y.shape[1]
    out_arr = np.empty((rows, cols), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double dot
    for i in range(rows):
        dot = 0.0
        for j in range(cols):
            dot += y[i, j] * gy[i, j]
        for j in range(cols):
            out[i, j] = y[i, j] * (gy[i, j] - dot)
    return out_arr


def masked_softmax_fwd(cnp.float64_t[:, ::1] x, cnp.int64_t[::1] prefix):
    cdef Py_ssize_t rows = x.shape[0], cols = x.shape[1]
    out_arr = np.zeros((rows, cols), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, p
    cdef double m, s
    for i in range(rows):
        p = prefix[i]
        if p > cols:
            p = cols
        m = x[i, 0]
        for j in range(1, p):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(p):
            out[i, j] = exp(x[i, j] - m)
            s += out[i, j]
        for j in range(p):
            out[i, j] /= s
    return out_arr


def masked_softmax_bwd(cnp.float64_t[:, ::1] y, cnp.float64_t[:, ::1] gy):
    return softmax_rows_bwd(y, gy)


def pairwise_distances(cnp.float64_t[:, :, ::1] points, cnp.uint8_t[:, ::1] visible):
    cdef Py_ssize_t T = points.shape[0], J = points.shape[1]
    out_arr = np.empty((T, J, J), dtype=np.float64)
    cdef cnp.float64_t[:, :, ::1] out = out_arr
    cdef Py_ssize_t t, a, b
    cdef double dx, dy, d
    for t in range(T):
        for a in range(J):
            out[t, a, a] = 0.0 if visible[t, a] else -1.0
            for b in range(a + 1, J):
                if visible[t, a] and visible[t, b]:
                    dx = points[t, a, 0] - points[t, b, 0]
                    dy = points[t, a, 1] - points[t, b, 1]
                    d = sqrt(dx * dx + dy * dy)
                else:
                    d = -1.0
                out[t, a, b] = d
                out[t, b, a] = d
    return out_arr


def adamw_update(
    cnp.float64_t[::1] param,
    cnp.float64_t[::1] grad,
    cnp.float64_t[::1] m,
    cnp.float64_t[::1] v,
    double lr,
    double beta1,
    double beta2,
    double eps,
    double weight_decay,
    long step,
):
    cdef Py_ssize_t n = param.shape[0]
    cdef Py_ssize_t i
    cdef double c1 = 1.0 - beta1 ** step
    cdef double c2 = 1.0 - beta2 ** step
    cdef double g
    for i in range(n):
        g = grad[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * g
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
        param[i] *= 1.0 - lr * weight_decay
        param[i] -= (lr / c1) * m[i] / (sqrt(v[i] / c2) + eps)
