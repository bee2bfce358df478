"""Pure-Python/NumPy twins of the kernels in ``_jetcore.pyx``."""
import numpy as np


def mul(a, b, I, J, K):
    out = np.zeros(a.shape[0])
    np.add.at(out, K, a[I] * b[J])
    return out


def horner(c, t, I, J, K):
    n = t.shape[0]
    r = np.zeros(n)
    r[0] = c[-1]
    for k in range(len(c) - 2, -1, -1):
        r = mul(r, t, I, J, K)
        r[0] += c[k]
    return r


def lie(h, F, dsrc, ddst, dfac, dptr, I, J, K):
    n = h.shape[0]
    out = np.zeros(n)
    for v in range(F.shape[0]):
        lo, hi = dptr[v], dptr[v + 1]
        dh = np.zeros(n)
        dh[ddst[lo:hi]] = h[dsrc[lo:hi]] * dfac[lo:hi]
        np.add.at(out, K, dh[I] * F[v, J])
    return out
