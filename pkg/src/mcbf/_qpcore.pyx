# cython: language_level=3, boundscheck=True, wraparound=False, cdivision=True
"""Compiled dual active-set iteration; twin of :mod:`mcbf._qpcore_py`."""
import numpy as np
from libc.math cimport INFINITY, fabs, isfinite


cdef int _solve_small(double[:, ::1] G, double[::1] rhs, int n):
    """Gaussian elimination with partial pivoting, in place; result in rhs."""
    cdef int i, j, k, piv
    cdef double m, tmp
    for k in range(n):
        piv = k
        for i in range(k + 1, n):
            if fabs(G[i, k]) > fabs(G[piv, k]):
                piv = i
        if G[piv, k] == 0.0:
            return -1
        if piv != k:
            for j in range(n):
                tmp = G[k, j]; G[k, j] = G[piv, j]; G[piv, j] = tmp
            tmp = rhs[k]; rhs[k] = rhs[piv]; rhs[piv] = tmp
        for i in range(k + 1, n):
            m = G[i, k] / G[k, k]
            for j in range(k, n):
                G[i, j] -= m * G[k, j]
            rhs[i] -= m * rhs[k]
    for i in range(n - 1, -1, -1):
        tmp = rhs[i]
        for j in range(i + 1, n):
            tmp -= G[i, j] * rhs[j]
        rhs[i] = tmp / G[i, i]
    return 0


def gi_loop(const double[:, ::1] Hinv, const double[::1] x0, const double[:, ::1] Cn,
            const double[::1] dn, double feas_tol, int max_iter):
    cdef int nf = Hinv.shape[0], m = Cn.shape[0]
    cdef int cap = nf + 2
    x_arr = np.array(x0, dtype=float)
    cdef double[::1] x = x_arr
    active_arr = np.zeros(cap, dtype=np.intp)
    cdef Py_ssize_t[::1] active = active_arr
    u_arr = np.zeros(cap)
    cdef double[::1] u = u_arr
    cdef double[::1] up = np.zeros(cap)
    cdef double[::1] hp = np.zeros(nf)
    cdef double[::1] zdir = np.zeros(nf)
    cdef double[:, ::1] HN = np.zeros((cap, nf))
    cdef double[:, ::1] G = np.zeros((cap, cap))
    cdef double[::1] r = np.zeros(cap)
    cdef int na = 0, it = 0, status = 2, p, i, j, k, drop, added
    cdef double smin, s, t1, t2, t, ratio, curv, scale, sp
    infeasible = []
    while it < max_iter:
        p = -1
        smin = INFINITY
        for i in range(m):
            s = dn[i]
            for j in range(nf):
                s += Cn[i, j] * x[j]
            if s < smin:
                smin = s
                p = i
        if m == 0 or smin >= -feas_tol:
            status = 0
            break
        for k in range(na):
            up[k] = u[k]
        up[na] = 0.0
        added = 0
        while it < max_iter:
            it += 1
            for i in range(nf):
                sp = 0.0
                for j in range(nf):
                    sp += Hinv[i, j] * Cn[p, j]
                hp[i] = sp
            for k in range(na):
                for i in range(nf):
                    sp = 0.0
                    for j in range(nf):
                        sp += Hinv[i, j] * Cn[active[k], j]
                    HN[k, i] = sp
            for k in range(na):
                for j in range(na):
                    sp = 0.0
                    for i in range(nf):
                        sp += Cn[active[k], i] * HN[j, i]
                    G[k, j] = sp
                sp = 0.0
                for i in range(nf):
                    sp += HN[k, i] * Cn[p, i]
                r[k] = sp
            if na > 0 and _solve_small(G, r, na) != 0:
                status = 2
                break
            for i in range(nf):
                sp = hp[i]
                for k in range(na):
                    sp -= HN[k, i] * r[k]
                # nf independent active rows span the space: no primal step left
                zdir[i] = 0.0 if na >= nf else sp
            t1 = INFINITY
            drop = -1
            for k in range(na):
                if r[k] > 1e-12:
                    ratio = up[k] / r[k]
                    if ratio < t1:
                        t1 = ratio
                        drop = k
            curv = 0.0
            scale = 0.0
            sp = dn[p]
            for i in range(nf):
                curv += zdir[i] * Cn[p, i]
                scale += Cn[p, i] * hp[i]
                sp += Cn[p, i] * x[i]
            t2 = INFINITY if curv <= 1e-12 * scale else -sp / curv
            t = t1 if t1 < t2 else t2
            if not isfinite(t):
                status = 1
                infeasible = [int(active[k]) for k in range(na)] + [p]
                break
            if isfinite(t2):
                for i in range(nf):
                    x[i] += t * zdir[i]
            for k in range(na):
                up[k] -= t * r[k]
            up[na] += t
            if t2 <= t1:
                active[na] = p
                na += 1
                for k in range(na):
                    u[k] = up[k]
                added = 1
                break
            for k in range(drop, na - 1):
                active[k] = active[k + 1]
            for k in range(drop, na):
                up[k] = up[k + 1]
            na -= 1
        if status == 1 or not added:
            break
    return (x_arr, active_arr[:na].copy(), u_arr[:na].copy(), it, status,
            np.array(infeasible, dtype=np.intp))
