# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: fused network forward/backward and normal CDF/PDF.

Matrix products go through BLAS dgemm (via scipy's Cython bindings); bias,
tanh and the extra-column bookkeeping are fused C loops, which avoids the
temporaries the NumPy fallback allocates per layer.
"""

from libc.math cimport erfc, exp, tanh as ctanh, sqrt

import numpy as np
cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

BACKEND_NAME = "fast"

cdef double INV_SQRT2 = 0.7071067811865475244
cdef double INV_SQRT2PI = 0.3989422804014326779


def norm_cdf(z):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] zz = np.ascontiguousarray(z, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(zz.shape[0], dtype=np.float64)
    cdef Py_ssize_t i, n = zz.shape[0]
    for i in range(n):
        out[i] = 0.5 * erfc(-zz[i] * INV_SQRT2)
    return out.reshape(np.shape(z))


def norm_pdf(z):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] zz = np.ascontiguousarray(z, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(zz.shape[0], dtype=np.float64)
    cdef Py_ssize_t i, n = zz.shape[0]
    for i in range(n):
        out[i] = INV_SQRT2PI * exp(-0.5 * zz[i] * zz[i])
    return out.reshape(np.shape(z))


cdef void _gemm_rowmajor(double* a, double* b, double* c,
                         int m, int n, int k, int lda, int ldb, int ldc,
                         double beta) nogil:
    # Row-major C(m,n) = A(m,k) @ B(k,n): compute column-major C^T = B^T A^T.
    cdef double alpha = 1.0
    dgemm("N", "N", &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


cdef void _gemm_at_b(double* a, double* b, double* c,
                     int m, int n, int k, int lda, int ldb, int ldc) nogil:
    # Row-major C(m,n) = A(k,m)^T @ B(k,n).
    cdef double alpha = 1.0
    cdef double beta = 0.0
    dgemm("N", "T", &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


cdef void _gemm_a_bt(double* a, double* b, double* c,
                     int m, int n, int k, int lda, int ldb, int ldc) nogil:
    # Row-major C(m,n) = A(m,k) @ B(n,k)^T.
    cdef double alpha = 1.0
    cdef double beta = 0.0
    dgemm("T", "N", &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


def forward_batch(list weights, list biases, x, extra):
    """Same contract as the pure backend's forward_batch."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] xx = np.ascontiguousarray(x, dtype=np.float64)
    cdef bint has_extra = extra is not None
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ex
    cdef Py_ssize_t nb = xx.shape[0]
    cdef Py_ssize_t d = xx.shape[1]
    cdef int n_layers = len(weights)
    cdef Py_ssize_t i, j, l
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a0, a_prev, a_next, w, out
    cdef cnp.ndarray[cnp.float64_t, ndim=1] b
    cdef Py_ssize_t fan_in, fan_out, width

    if has_extra:
        ex = np.ascontiguousarray(extra, dtype=np.float64)
        a0 = np.empty((nb, d + 1), dtype=np.float64)
        for i in range(nb):
            for j in range(d):
                a0[i, j] = xx[i, j]
            a0[i, d] = ex[i]
    else:
        a0 = xx
    acts = [a0]
    a_prev = a0
    for l in range(n_layers - 1):
        w = weights[l]
        b = biases[l]
        fan_in = w.shape[0]
        fan_out = w.shape[1]
        width = fan_out + 1 if has_extra else fan_out
        a_next = np.empty((nb, width), dtype=np.float64)
        _gemm_rowmajor(&a_prev[0, 0], &w[0, 0], &a_next[0, 0],
                       <int>nb, <int>fan_out, <int>fan_in,
                       <int>fan_in, <int>fan_out, <int>width, 0.0)
        for i in range(nb):
            for j in range(fan_out):
                a_next[i, j] = ctanh(a_next[i, j] + b[j])
            if has_extra:
                a_next[i, fan_out] = ex[i]
        acts.append(a_next)
        a_prev = a_next
    w = weights[n_layers - 1]
    b = biases[n_layers - 1]
    fan_in = w.shape[0]
    fan_out = w.shape[1]
    out = np.empty((nb, fan_out), dtype=np.float64)
    _gemm_rowmajor(&a_prev[0, 0], &w[0, 0], &out[0, 0],
                   <int>nb, <int>fan_out, <int>fan_in,
                   <int>fan_in, <int>fan_out, <int>fan_out, 0.0)
    for i in range(nb):
        for j in range(fan_out):
            out[i, j] += b[j]
    return acts, out


def backward_batch(list weights, list acts, dout, bint has_extra):
    """Same contract as the pure backend's backward_batch."""
    cdef int n_layers = len(weights)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dz = np.ascontiguousarray(dout, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a, w, dw, da, dz_next
    cdef cnp.ndarray[cnp.float64_t, ndim=1] db
    cdef Py_ssize_t nb = dz.shape[0]
    cdef Py_ssize_t i, j
    cdef int l
    cdef Py_ssize_t fan_in, fan_out, h_dim
    cdef double g
    dws = [None] * n_layers
    dbs = [None] * n_layers
    for l in range(n_layers - 1, -1, -1):
        a = acts[l]
        w = weights[l]
        fan_in = w.shape[0]
        fan_out = w.shape[1]
        dw = np.empty((fan_in, fan_out), dtype=np.float64)
        _gemm_at_b(&a[0, 0], &dz[0, 0], &dw[0, 0],
                   <int>fan_in, <int>fan_out, <int>nb,
                   <int>fan_in, <int>fan_out, <int>fan_out)
        db = np.zeros(fan_out, dtype=np.float64)
        for i in range(nb):
            for j in range(fan_out):
                db[j] += dz[i, j]
        dws[l] = dw
        dbs[l] = db
        if l == 0:
            break
        h_dim = fan_in - 1 if has_extra else fan_in
        dz_next = np.empty((nb, h_dim), dtype=np.float64)
        da = np.empty((nb, fan_in), dtype=np.float64)
        _gemm_a_bt(&dz[0, 0], &w[0, 0], &da[0, 0],
                   <int>nb, <int>fan_in, <int>fan_out,
                   <int>fan_out, <int>fan_out, <int>fan_in)
        for i in range(nb):
            for j in range(h_dim):
                g = a[i, j]
                dz_next[i, j] = da[i, j] * (1.0 - g * g)
        dz = dz_next
    return dws, dbs
