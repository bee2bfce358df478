# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for truncated Taylor polynomial arithmetic.

Every function here has a drop-in twin in :mod:`mcbf._jetcore_py`; the two
must agree to the last bit on the same inputs (summation order is identical).
"""
import numpy as np


def mul(const double[::1] a, const double[::1] b,
        const int[::1] I, const int[::1] J, const int[::1] K):
    cdef Py_ssize_t p, npairs = I.shape[0]
    out = np.zeros(a.shape[0])
    cdef double[::1] o = out
    for p in range(npairs):
        o[K[p]] += a[I[p]] * b[J[p]]
    return out


def horner(const double[::1] c, const double[::1] t,
           const int[::1] I, const int[::1] J, const int[::1] K):
    """Evaluate sum_k c[k] * t**k for a jet ``t`` with zero constant term."""
    cdef Py_ssize_t n = t.shape[0], npairs = I.shape[0]
    cdef Py_ssize_t deg = c.shape[0] - 1
    cdef Py_ssize_t p, i, k
    r_arr = np.zeros(n)
    tmp_arr = np.zeros(n)
    cdef double[::1] r = r_arr
    cdef double[::1] tmp = tmp_arr
    r[0] = c[deg]
    for k in range(deg - 1, -1, -1):
        for i in range(n):
            tmp[i] = 0.0
        for p in range(npairs):
            tmp[K[p]] += r[I[p]] * t[J[p]]
        tmp[0] += c[k]
        for i in range(n):
            r[i] = tmp[i]
    return r_arr


def lie(const double[::1] h, double[:, ::1] F,
        const int[::1] dsrc, const int[::1] ddst, const double[::1] dfac,
        const int[::1] dptr,
        const int[::1] I, const int[::1] J, const int[::1] K):
    """Return sum_v (d/dx_v h) * F[v] for jets stored row-wise in ``F``."""
    cdef Py_ssize_t n = h.shape[0], nv = F.shape[0], npairs = I.shape[0]
    cdef Py_ssize_t v, p, i
    out = np.zeros(n)
    dh_arr = np.zeros(n)
    cdef double[::1] o = out
    cdef double[::1] dh = dh_arr
    for v in range(nv):
        for i in range(n):
            dh[i] = 0.0
        for p in range(dptr[v], dptr[v + 1]):
            dh[ddst[p]] = h[dsrc[p]] * dfac[p]
        for p in range(npairs):
            o[K[p]] += dh[I[p]] * F[v, J[p]]
    return out
