# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Fused float64 kernels for the training hot path.

Semantics match blocksearch._kernels.ref exactly (up to summation
order); that module is the reference whenever the two disagree.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, sqrt

cnp.import_array()


def layer_norm_fwd(double[:, ::1] x, double[::1] gain, double[::1] bias, double eps):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef cnp.ndarray[double, ndim=2] y = np.empty((n, d))
    cdef cnp.ndarray[double, ndim=1] mean = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] rstd = np.empty(n)
    cdef double[:, ::1] yv = y
    cdef double[::1] mv = mean, rv = rstd
    cdef Py_ssize_t i, j
    cdef double s, v, m, r, xh
    for i in range(n):
        s = 0.0
        for j in range(d):
            s += x[i, j]
        m = s / d
        v = 0.0
        for j in range(d):
            s = x[i, j] - m
            v += s * s
        r = 1.0 / sqrt(v / d + eps)
        mv[i] = m
        rv[i] = r
        for j in range(d):
            xh = (x[i, j] - m) * r
            yv[i, j] = xh * gain[j] + bias[j]
    return y, mean, rstd


def layer_norm_bwd(double[:, ::1] dy, double[:, ::1] x, double[::1] gain,
                   double[::1] mean, double[::1] rstd):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef cnp.ndarray[double, ndim=2] dx = np.empty((n, d))
    cdef cnp.ndarray[double, ndim=1] dgain = np.zeros(d)
    cdef cnp.ndarray[double, ndim=1] dbias = np.zeros(d)
    cdef double[:, ::1] dxv = dx
    cdef double[::1] dgv = dgain, dbv = dbias
    cdef Py_ssize_t i, j
    cdef double m, r, xh, dxh, s1, s2
    for i in range(n):
        m = mean[i]
        r = rstd[i]
        s1 = 0.0
        s2 = 0.0
        for j in range(d):
            xh = (x[i, j] - m) * r
            dxh = dy[i, j] * gain[j]
            dgv[j] += dy[i, j] * xh
            dbv[j] += dy[i, j]
            s1 += dxh
            s2 += dxh * xh
        s1 /= d
        s2 /= d
        for j in range(d):
            xh = (x[i, j] - m) * r
            dxh = dy[i, j] * gain[j]
            dxv[i, j] = (dxh - s1 - xh * s2) * r
    return dx, dgain, dbias


def softmax_fwd(double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef cnp.ndarray[double, ndim=2] y = np.empty((n, d))
    cdef double[:, ::1] yv = y
    cdef Py_ssize_t i, j
    cdef double m, s
    for i in range(n):
        m = x[i, 0]
        for j in range(1, d):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(d):
            yv[i, j] = exp(x[i, j] - m)
            s += yv[i, j]
        for j in range(d):
            yv[i, j] /= s
    return y


def softmax_bwd(double[:, ::1] y, double[:, ::1] dy):
    cdef Py_ssize_t n = y.shape[0], d = y.shape[1]
    cdef cnp.ndarray[double, ndim=2] dx = np.empty((n, d))
    cdef double[:, ::1] dxv = dx
    cdef Py_ssize_t i, j
    cdef double inner
    for i in range(n):
        inner = 0.0
        for j in range(d):
            inner += dy[i, j] * y[i, j]
        for j in range(d):
            dxv[i, j] = y[i, j] * (dy[i, j] - inner)
    return dx


def cross_entropy_fwd(double[:, ::1] logits, long[::1] targets):
    cdef Py_ssize_t n = logits.shape[0], v = logits.shape[1]
    cdef cnp.ndarray[double, ndim=1] nll = np.empty(n)
    cdef cnp.ndarray[double, ndim=2] probs = np.empty((n, v))
    cdef double[::1] nv = nll
    cdef double[:, ::1] pv = probs
    cdef Py_ssize_t i, j
    cdef double m, s, lse
    for i in range(n):
        m = logits[i, 0]
        for j in range(1, v):
            if logits[i, j] > m:
                m = logits[i, j]
        s = 0.0
        for j in range(v):
            s += exp(logits[i, j] - m)
        lse = log(s)
        nv[i] = lse - (logits[i, targets[i]] - m)
        for j in range(v):
            pv[i, j] = exp(logits[i, j] - m - lse)
    return nll, probs


def cross_entropy_bwd(double[:, ::1] probs, long[::1] targets, double scale):
    cdef Py_ssize_t n = probs.shape[0], v = probs.shape[1]
    cdef cnp.ndarray[double, ndim=2] d = np.empty((n, v))
    cdef double[:, ::1] dv = d
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(v):
            dv[i, j] = probs[i, j] * scale
        dv[i, targets[i]] -= scale
    return d


def embedding_bwd(long[::1] ids, double[:, ::1] dy, Py_ssize_t n_rows):
    cdef Py_ssize_t n = dy.shape[0], d = dy.shape[1]
    cdef cnp.ndarray[double, ndim=2] dw = np.zeros((n_rows, d))
    cdef double[:, ::1] dwv = dw
    cdef Py_ssize_t i, j, r
    for i in range(n):
        r = ids[i]
        for j in range(d):
            dwv[r, j] += dy[i, j]
    return dw
