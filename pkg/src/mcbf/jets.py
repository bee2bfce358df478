"""Truncated multivariate Taylor jets.

A :class:`Jet` holds the Taylor coefficients of a scalar quantity in ``nvar``
perturbation variables up to total degree ``space.order``. Coefficients are
stored in graded order, so ``c[0]`` is the value and ``c[1:nvar + 1]`` is the
gradient. Each jet also tracks ``order``, the highest degree whose
coefficients are still exact; differentiating a jet lowers it by one, and
products keep the smaller of the two. Degree-``d`` coefficients of a product
never depend on coefficients above ``d``, so stale high-degree entries cannot
leak downward.

The hot loops live in a compiled extension (``mcbf._jetcore``) with a NumPy
twin in ``mcbf._jetcore_py``; :mod:`mcbf.backend` picks one at import.
"""
from __future__ import annotations

import math
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np

from . import backend as _backend


class NonSmoothError(ArithmeticError):
    """A primitive was evaluated where it is not smooth (or not defined)."""

    def __init__(self, primitive: str, value: float):
        super().__init__(f"{primitive} is not differentiable at {value!r}")
        self.primitive = primitive
        self.value = value


class JetSpace:
    """Monomial bookkeeping for jets in ``nvar`` variables up to ``order``."""

    def __init__(self, nvar: int, order: int):
        if nvar < 1 or order < 0:
            raise ValueError("need nvar >= 1 and order >= 0")
        self.nvar = nvar
        self.order = order
        monos = []
        for d in range(order + 1):
            for combo in combinations_with_replacement(range(nvar), d):
                e = [0] * nvar
                for v in combo:
                    e[v] += 1
                monos.append(tuple(e))
        self.monomials = monos
        self.size = len(monos)
        index = {m: i for i, m in enumerate(monos)}
        self.degree = np.array([sum(m) for m in monos], dtype=np.int32)

        I, J, K = [], [], []
        for i, mi in enumerate(monos):
            di = self.degree[i]
            for j, mj in enumerate(monos):
                if di + self.degree[j] > order:
                    continue
                I.append(i)
                J.append(j)
                K.append(index[tuple(a + b for a, b in zip(mi, mj))])
        self.I = np.array(I, dtype=np.int32)
        self.J = np.array(J, dtype=np.int32)
        self.K = np.array(K, dtype=np.int32)

        src, dst, fac, ptr = [], [], [], [0]
        for v in range(nvar):
            for i, m in enumerate(monos):
                if m[v] == 0:
                    continue
                lowered = list(m)
                lowered[v] -= 1
                src.append(i)
                dst.append(index[tuple(lowered)])
                fac.append(float(m[v]))
            ptr.append(len(src))
        self.dsrc = np.array(src, dtype=np.int32)
        self.ddst = np.array(dst, dtype=np.int32)
        self.dfac = np.array(fac, dtype=np.float64)
        self.dptr = np.array(ptr, dtype=np.int32)

    def __repr__(self):
        return f"JetSpace(nvar={self.nvar}, order={self.order})"

    def constant(self, value: float) -> "Jet":
        c = np.zeros(self.size)
        c[0] = value
        return Jet(c, self, self.order)

    def variables(self, x0) -> list["Jet"]:
        """Identity jets ``x0[i] + dx_i``."""
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (self.nvar,):
            raise ValueError(f"expected a point of length {self.nvar}, got shape {x0.shape}")
        out = []
        for i in range(self.nvar):
            c = np.zeros(self.size)
            c[0] = x0[i]
            if self.order >= 1:
                c[1 + i] = 1.0
            out.append(Jet(c, self, self.order))
        return out


@lru_cache(maxsize=64)
def jet_space(nvar: int, order: int) -> JetSpace:
    return JetSpace(nvar, order)


class Jet:
    __slots__ = ("c", "space", "order")
    __array_ufunc__ = None  # keep NumPy scalars from hijacking mixed arithmetic

    def __init__(self, c: np.ndarray, space: JetSpace, order: int):
        self.c = c
        self.space = space
        self.order = order

    @property
    def value(self) -> float:
        return float(self.c[0])

    def gradient(self) -> np.ndarray:
        n = self.space.nvar
        if self.order < 1:
            raise ValueError("jet carries no exact first-order information")
        return self.c[1:n + 1].copy()

    def __repr__(self):
        return f"Jet(value={self.c[0]!r}, order={self.order}, nvar={self.space.nvar})"

    # -- arithmetic ----------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.space is not self.space:
                raise ValueError("cannot mix jets from different spaces")
            return other
        return None

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            c = self.c.copy()
            c[0] += other
            return Jet(c, self.space, self.order)
        return Jet(self.c + o.c, self.space, min(self.order, o.order))

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        if o is None:
            c = self.c.copy()
            c[0] -= other
            return Jet(c, self.space, self.order)
        return Jet(self.c - o.c, self.space, min(self.order, o.order))

    def __rsub__(self, other):
        c = -self.c
        c[0] += other
        return Jet(c, self.space, self.order)

    def __neg__(self):
        return Jet(-self.c, self.space, self.order)

    def __pos__(self):
        return self

    def __mul__(self, other):
        o = self._coerce(other)
        if o is None:
            return Jet(self.c * other, self.space, self.order)
        sp = self.space
        return Jet(_backend.jet.mul(self.c, o.c, sp.I, sp.J, sp.K), sp, min(self.order, o.order))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is None:
            return Jet(self.c / other, self.space, self.order)
        return self * o.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, Jet):
            return exp(log(self) * p)
        return self._series("power", _power_coeffs(self.c[0], float(p), self.space.order))

    # -- univariate composition -------------------------------------------------
    def _series(self, name: str, coeffs: np.ndarray) -> "Jet":
        sp = self.space
        if sp.order == 0:
            c = np.array([coeffs[0]])
            return Jet(c, sp, self.order)
        t = self.c.copy()
        t[0] = 0.0
        return Jet(_backend.jet.horner(coeffs, t, sp.I, sp.J, sp.K), sp, self.order)

    def reciprocal(self) -> "Jet":
        a0 = float(self.c[0])
        if a0 == 0.0:
            raise NonSmoothError("reciprocal", a0)
        K = self.space.order
        coeffs = np.array([(-1.0) ** k / a0 ** (k + 1) for k in range(K + 1)])
        return self._series("reciprocal", coeffs)

    def derivative(self, var: int) -> "Jet":
        """Partial derivative with respect to perturbation variable ``var``."""
        sp = self.space
        lo, hi = sp.dptr[var], sp.dptr[var + 1]
        c = np.zeros(sp.size)
        c[sp.ddst[lo:hi]] = self.c[sp.dsrc[lo:hi]] * sp.dfac[lo:hi]
        return Jet(c, sp, self.order - 1)


def _power_coeffs(a0: float, p: float, K: int) -> np.ndarray:
    coeffs = np.zeros(K + 1)
    is_nat = p >= 0 and float(p).is_integer()
    if not is_nat and a0 <= 0.0:
        raise NonSmoothError(f"power(., {p})", a0)
    binom = 1.0
    for k in range(K + 1):
        if k > 0:
            binom *= (p - (k - 1)) / k
        if is_nat and k > p:
            break
        coeffs[k] = binom * a0 ** (p - k)
    return coeffs


def lie_combine(h: "Jet", F: list) -> "Jet | float":
    """``sum_v (d h / d x_v) * F[v]`` in one kernel call."""
    sp = h.space
    rows = np.zeros((sp.nvar, sp.size))
    order = h.order - 1
    for v, fv in enumerate(F):
        if isinstance(fv, Jet):
            rows[v] = fv.c
            order = min(order, fv.order)
        else:
            rows[v, 0] = fv
    c = _backend.jet.lie(h.c, rows, sp.dsrc, sp.ddst, sp.dfac, sp.dptr, sp.I, sp.J, sp.K)
    return Jet(c, sp, order)


# -- polymorphic primitives -----------------------------------------------------

def sin(x):
    if isinstance(x, Jet):
        a0 = float(x.c[0])
        s, c = math.sin(a0), math.cos(a0)
        cyc = (s, c, -s, -c)
        coeffs = np.array([cyc[k % 4] / math.factorial(k) for k in range(x.space.order + 1)])
        return x._series("sin", coeffs)
    return math.sin(x)


def cos(x):
    if isinstance(x, Jet):
        a0 = float(x.c[0])
        s, c = math.sin(a0), math.cos(a0)
        cyc = (c, -s, -c, s)
        coeffs = np.array([cyc[k % 4] / math.factorial(k) for k in range(x.space.order + 1)])
        return x._series("cos", coeffs)
    return math.cos(x)


def exp(x):
    if isinstance(x, Jet):
        e = math.exp(float(x.c[0]))
        coeffs = np.array([e / math.factorial(k) for k in range(x.space.order + 1)])
        return x._series("exp", coeffs)
    return math.exp(x)


def log(x):
    if isinstance(x, Jet):
        a0 = float(x.c[0])
        if a0 <= 0.0:
            raise NonSmoothError("log", a0)
        K = x.space.order
        coeffs = np.array([math.log(a0)] + [(-1.0) ** (k + 1) / (k * a0 ** k) for k in range(1, K + 1)])
        return x._series("log", coeffs)
    if x <= 0.0:
        raise NonSmoothError("log", x)
    return math.log(x)


def sqrt(x):
    if isinstance(x, Jet):
        a0 = float(x.c[0])
        if a0 <= 0.0:
            raise NonSmoothError("sqrt", a0)
        return x._series("sqrt", _power_coeffs(a0, 0.5, x.space.order))
    if x < 0.0:
        raise NonSmoothError("sqrt", x)
    return math.sqrt(x)


def atan2(y, x):
    """Two-argument arctangent; smooth away from the origin."""
    yj, xj = isinstance(y, Jet), isinstance(x, Jet)
    if not (yj or xj):
        return math.atan2(y, x)
    y0 = float(y.c[0]) if yj else float(y)
    x0 = float(x.c[0]) if xj else float(x)
    r2 = x0 * x0 + y0 * y0
    if r2 == 0.0:
        raise NonSmoothError("atan2", 0.0)
    # relative angle to the expansion point: atan(cross / dot), dot > 0 nearby
    cross = y * x0 - x * y0
    dot = x * x0 + y * y0
    w = cross / dot
    if not isinstance(w, Jet):
        return math.atan2(y0, x0)
    K = w.space.order
    coeffs = np.zeros(K + 1)
    coeffs[0] = math.atan2(y0, x0)
    for k in range(1, K + 1, 2):
        coeffs[k] = (-1.0) ** ((k - 1) // 2) / k
    return w._series("atan2", coeffs)


def value_of(s) -> float:
    return float(s.c[0]) if isinstance(s, Jet) else float(s)
