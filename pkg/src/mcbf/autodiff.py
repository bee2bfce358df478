"""Scalar fields over the jet algebra and their Lie derivatives.

A field is evaluated by *expansion*: the state is replaced by identity jets
``x0 + dx`` of a sufficient order and the field returns its own truncated
Taylor polynomial. A Lie-derivative field consumes one order of that
expansion, so fields nest freely (``lie_along_f(lie_along_f(h, sys), sys)``)
and every field knows its ``depth``, the number of orders it consumes.

Leaf fields wrap plain Python callables ``fn(state_sequence) -> scalar``
written with the primitives of :mod:`mcbf.jets` (``sin``, ``cos``, ``sqrt``,
...), which accept both floats and jets.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .jets import Jet, jet_space, lie_combine, value_of


class ScalarField:
    """Base class; subclasses implement :meth:`expand`."""

    arity: int
    depth: int = 0

    def expand(self, X: Sequence, memo: dict):
        raise NotImplementedError

    def _cached(self, X, memo):
        key = id(self)
        if key not in memo:
            memo[key] = self.expand(X, memo)
        return memo[key]

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.arity,):
            raise ValueError(f"field expects a state of length {self.arity}, got {x.shape}")
        if self.depth == 0:
            return value_of(self._cached([float(v) for v in x], {}))
        X = jet_space(self.arity, self.depth).variables(x)
        return value_of(self._cached(X, {}))

    # -- algebra ---------------------------------------------------------------
    def __add__(self, other):
        return _Combine(self, _as_field(other, self.arity), "+")

    def __radd__(self, other):
        return _Combine(_as_field(other, self.arity), self, "+")

    def __sub__(self, other):
        return _Combine(self, _as_field(other, self.arity), "-")

    def __rsub__(self, other):
        return _Combine(_as_field(other, self.arity), self, "-")

    def __mul__(self, other):
        return _Combine(self, _as_field(other, self.arity), "*")

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def map(self, fn: Callable, name: str = "map") -> "ScalarField":
        """Field ``x -> fn(self(x))``; ``fn`` must accept floats and jets."""
        return _Mapped(self, fn, name)


def _as_field(obj, arity):
    if isinstance(obj, ScalarField):
        if obj.arity != arity:
            raise ValueError(f"arity mismatch: {obj.arity} vs {arity}")
        return obj
    c = float(obj)
    return Field(lambda s, c=c: c, arity, name=f"const({c:g})")


class Field(ScalarField):
    """Leaf field backed by a polymorphic callable."""

    def __init__(self, fn: Callable[[Sequence], object], arity: int, name: str = "field"):
        self.fn = fn
        self.arity = int(arity)
        self.name = name
        self.depth = 0

    def expand(self, X, memo):
        return self.fn(X)

    def __repr__(self):
        return f"Field({self.name}, arity={self.arity})"


class _Combine(ScalarField):
    def __init__(self, a: ScalarField, b: ScalarField, op: str):
        self.a, self.b, self.op = a, b, op
        self.arity = a.arity
        self.depth = max(a.depth, b.depth)

    def expand(self, X, memo):
        va = self.a._cached(X, memo)
        vb = self.b._cached(X, memo)
        if self.op == "+":
            return va + vb
        if self.op == "-":
            return va - vb
        return va * vb


class _Mapped(ScalarField):
    def __init__(self, inner: ScalarField, fn: Callable, name: str):
        self.inner, self.fn, self.name = inner, fn, name
        self.arity = inner.arity
        self.depth = inner.depth

    def expand(self, X, memo):
        return self.fn(self.inner._cached(X, memo))


def _drift(sys, X, memo):
    key = ("f", id(sys))
    if key not in memo:
        memo[key] = sys.f(X)
    return memo[key]


def _input(sys, X, memo):
    key = ("g", id(sys))
    if key not in memo:
        memo[key] = sys.g(X)
    return memo[key]


class LieDerivative(ScalarField):
    """The field ``x -> grad h(x) . f(x)``."""

    def __init__(self, h: ScalarField, sys):
        if h.arity != sys.n:
            raise ValueError(f"field arity {h.arity} does not match state dimension {sys.n}")
        self.h, self.sys = h, sys
        self.arity = h.arity
        self.depth = h.depth + 1

    def expand(self, X, memo):
        P = self.h._cached(X, memo)
        if not isinstance(P, Jet):
            return 0.0
        return lie_combine(P, _drift(self.sys, X, memo))


class ControlRow:
    """The q-row field ``x -> grad h(x) . g(x)``."""

    def __init__(self, h: ScalarField, sys):
        if h.arity != sys.n:
            raise ValueError(f"field arity {h.arity} does not match state dimension {sys.n}")
        self.h, self.sys = h, sys
        self.arity = h.arity
        self.depth = h.depth + 1

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        X = jet_space(self.arity, self.depth).variables(x)
        P = self.h._cached(X, {})
        if not isinstance(P, Jet):
            return np.zeros(self.sys.q)
        return P.gradient() @ self.sys.g_at(x)

    def expand(self, X, memo) -> list:
        P = self.h._cached(X, memo)
        G = _input(self.sys, X, memo)
        if not isinstance(P, Jet):
            return [0.0] * self.sys.q
        return [lie_combine(P, [row[j] for row in G]) for j in range(self.sys.q)]


def lie_along_f(h: ScalarField, sys) -> ScalarField:
    return LieDerivative(h, sys)


def lie_along_g(h: ScalarField, sys) -> ControlRow:
    return ControlRow(h, sys)


def lie_power(h: ScalarField, sys, k: int) -> ScalarField:
    """``L_f^k h`` as a nested field."""
    for _ in range(k):
        h = LieDerivative(h, sys)
    return h


def gradient(h: ScalarField, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    X = jet_space(h.arity, h.depth + 1).variables(x)
    P = h._cached(X, {})
    if not isinstance(P, Jet):
        return np.zeros(h.arity)
    return P.gradient()


def expand_fields(fields: Sequence[ScalarField], x, order: int) -> list:
    """Expand several fields at ``x`` sharing one memo (common subfields are reused)."""
    x = np.asarray(x, dtype=float)
    X = jet_space(len(x), order).variables(x)
    memo: dict = {}
    return [f._cached(X, memo) for f in fields]


def flow_derivatives(h: ScalarField, sys, x, order: int) -> np.ndarray:
    """Time derivatives ``d^k/dt^k h(x(t))`` at t=0 along the drift flow ``x' = f(x)``.

    Computed in a single pass with univariate Taylor jets of the flow (Picard
    iteration), independently of the nested :class:`LieDerivative` machinery.
    Only depth-0 fields are accepted.
    """
    if h.depth != 0:
        raise ValueError("flow_derivatives needs a depth-0 field")
    x = np.asarray(x, dtype=float)
    sp = jet_space(1, order)
    X = [sp.constant(v) for v in x]
    for _ in range(order):
        F = sys.f(X)
        nxt = []
        for xi, fi in zip(x, F):
            c = np.zeros(sp.size)
            c[0] = xi
            fc = fi.c if isinstance(fi, Jet) else np.r_[float(fi), np.zeros(order)]
            c[1:] = fc[:-1] / np.arange(1, order + 1)
            nxt.append(Jet(c, sp, order))
        X = nxt
    H = h.expand(X, {})
    coeffs = H.c if isinstance(H, Jet) else np.r_[float(H), np.zeros(order)]
    return np.array([coeffs[k] * math.factorial(k) for k in range(order + 1)])
