"""Integral HOCBFs: chain the differentiated controls through auxiliary dynamics.

Every control component whose relative degree is below the maximum ``m_bar``
gets an integrator chain ``u_j' = ... = nu_j`` of length ``m_bar - k_j``. On
the augmented state ``(x, u_a)`` the barrier then has the uniform relative
degree ``m_bar`` in the new input ``(u_n, nu)``, and the actuated ``u_j`` is
obtained by integrating the chain. A pair of bound barriers per chain keeps
``u_j`` inside its original box.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .autodiff import Field, ScalarField
from .barrier import (ClassK, ConstraintRow, HOCBFError, HOCBFSpec, RelativeDegreeSet,
                      detect_relative_degree_set, hocbf_row_with_psi, linear)
from .dynamics import AffineControlSystem, AugmentedSystem, compose_augmented, step_integrate


class IHOCBFError(HOCBFError):
    pass


@dataclass(frozen=True)
class AuxiliaryDynamics:
    """Chain ``u_j' = A u_j + B nu_j`` of length ``m`` for control index ``j``.

    With ``A`` and ``B`` omitted the chain is a pure integrator:
    ``u_{j,k}' = u_{j,k+1}`` and ``u_{j,m}' = nu_j``.
    """

    j: int
    m: int
    A: np.ndarray | None = None
    B: np.ndarray | None = None
    u0: np.ndarray | None = None

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"chain length must be >= 1, got {self.m}")
        if self.A is not None:
            A = np.asarray(self.A, dtype=float)
            if A.shape != (self.m, self.m):
                raise ValueError(f"A must be {self.m}x{self.m}")
            object.__setattr__(self, "A", A)
        if self.B is not None:
            B = np.asarray(self.B, dtype=float).reshape(-1)
            if B.shape != (self.m,):
                raise ValueError(f"B must have length {self.m}")
            object.__setattr__(self, "B", B)

    def f_chain(self, U):
        if self.A is None:
            return list(U[1:]) + [0.0]
        out = []
        for row in self.A:
            acc = 0.0
            for a, u in zip(row, U):
                if a != 0.0:
                    acc = acc + float(a) * u
            out.append(acc)
        return out

    def g_chain(self, U):
        if self.B is None:
            return [0.0] * (self.m - 1) + [1.0]
        return [float(v) for v in self.B]

    def initial_state(self, u_min: float, u_max: float) -> np.ndarray:
        if self.u0 is not None:
            u0 = np.asarray(self.u0, dtype=float).reshape(self.m)
        else:
            u0 = np.zeros(self.m)
            if not u_min < 0.0 < u_max:
                u0[0] = 0.5 * (u_min + u_max)
        if not u_min < u0[0] < u_max:
            raise IHOCBFError(
                f"initial u_{self.j + 1}={u0[0]} must lie strictly inside [{u_min}, {u_max}]")
        return u0

    def as_system(self) -> AffineControlSystem:
        return AffineControlSystem(self.m, 1, self.f_chain, lambda U: [[v] for v in self.g_chain(U)],
                                   labels=[f"u{self.j + 1}_{k + 1}" for k in range(self.m)])


class _Lifted(ScalarField):
    """Barrier on the base state viewed as a field on the augmented state."""

    def __init__(self, inner: ScalarField, n_base: int, arity: int):
        self.inner = inner
        self.n_base = n_base
        self.arity = arity
        self.depth = inner.depth

    def expand(self, X, memo):
        return self.inner.expand(list(X[:self.n_base]), {})


def lift(b: ScalarField, n_base: int, arity: int) -> ScalarField:
    if b.depth != 0:
        raise ValueError("only depth-0 barriers can be lifted to the augmented state")
    return _Lifted(b, n_base, arity)


@dataclass
class BoundBarrier:
    j: int
    u_min: float
    u_max: float
    chain: AffineControlSystem
    lower: HOCBFSpec
    upper: HOCBFSpec


@dataclass
class NuBoundCBFs:
    entries: list = field(default_factory=list)

    def rows(self, sys: AugmentedSystem, y) -> list[ConstraintRow]:
        out = []
        for e in self.entries:
            off = sys.aux_offset[e.j]
            U = np.asarray(y[off:off + e.chain.n], dtype=float)
            for spec, tag in ((e.lower, "min"), (e.upper, "max")):
                r, _ = hocbf_row_with_psi(spec, U)
                a = np.zeros(sys.q)
                a[e.j] = r.a_u[0]
                out.append(ConstraintRow(a, r.rhs, f"nu_bound_{tag}[u{e.j + 1}]"))
        return out

    def values(self, sys: AugmentedSystem, y) -> dict:
        out = {}
        for e in self.entries:
            u = float(y[sys.aux_offset[e.j]])
            out[e.j] = (u - e.u_min, e.u_max - u)
        return out


@dataclass
class IHOCBFSpec:
    b: ScalarField
    base: AffineControlSystem
    augmented: AugmentedSystem
    hocbf: HOCBFSpec
    bounds: NuBoundCBFs
    degrees: RelativeDegreeSet
    probe: RelativeDegreeSet | None = None

    @property
    def m_bar(self) -> int:
        return self.hocbf.m

    @property
    def aux(self) -> tuple:
        return self.augmented.aux

    def initial_aux(self) -> dict:
        lo, hi = self.base.bounds.u_min, self.base.bounds.u_max
        return {a.j: a.initial_state(lo[a.j], hi[a.j]) for a in self.aux}


def build_ihocbf(b: ScalarField, sys: AffineControlSystem, degrees: RelativeDegreeSet,
                 alphas: Sequence[ClassK] | None = None,
                 bound_alphas: Sequence[ClassK] | float | None = None,
                 nu_bounds: Mapping[int, tuple] | None = None,
                 chains: Mapping[int, AuxiliaryDynamics] | None = None,
                 check: bool = True, n_probes: int = 32, tol: float = 1e-9,
                 seed: int = 0) -> IHOCBFSpec:
    """Build the integral HOCBF of ``b`` for ``sys``.

    Args:
        degrees: detected or declared relative degree set of ``b``.
        alphas: class-K chain for the degree-``m_bar`` barrier (linear k=1).
        bound_alphas: class-K functions for the bound barriers, or a single
            linear gain (default 5).
        nu_bounds: optional hard box ``{j: (lo, hi)}`` on each ``nu_j``.
        chains: optional custom auxiliary dynamics per control index.
        check: probe the augmented system and require every component of the
            new input to appear at order ``m_bar``.
    """
    if not degrees.complete:
        raise IHOCBFError(f"relative degree set incomplete: {degrees.degrees}")
    m_bar = degrees.m_bar
    chains = dict(chains or {})
    aux = []
    for j, k in enumerate(degrees.degrees):
        if k < m_bar:
            a = chains.get(j) or AuxiliaryDynamics(j, m_bar - k)
            if a.j != j or a.m != m_bar - k:
                raise IHOCBFError(f"chain for u{j + 1} must have length {m_bar - k}")
            aux.append(a)
    aug = compose_augmented(sys, aux, dict(nu_bounds or {}))
    b_lift = lift(b, sys.n, aug.n)
    spec = HOCBFSpec(b_lift, m_bar, alphas, aug, name="ihocbf")
    probe = None
    if check:
        probe = detect_relative_degree_set(b_lift, aug, cap=m_bar, n_probes=n_probes, tol=tol, seed=seed)
        if probe.degrees != tuple([m_bar] * aug.q):
            missing = [aug.control_labels[j] for j, k in enumerate(probe.degrees) if k != m_bar]
            raise IHOCBFError(
                f"augmented input components {missing} do not appear at order {m_bar} "
                f"(probe found {probe.degrees})")
    spec.psi_sequence()

    if bound_alphas is None or isinstance(bound_alphas, (int, float)):
        gain = 5.0 if bound_alphas is None else float(bound_alphas)
        make_alphas = lambda m: [linear(gain) for _ in range(m)]  # noqa: E731
    else:
        seq = list(bound_alphas)
        make_alphas = lambda m: seq[:m]  # noqa: E731
    entries = []
    for a in aux:
        umin, umax = float(sys.bounds.u_min[a.j]), float(sys.bounds.u_max[a.j])
        if not (np.isfinite(umin) and np.isfinite(umax)):
            continue
        chain = a.as_system()
        lower = HOCBFSpec(Field(lambda U, c=umin: U[0] - c, a.m, f"u{a.j + 1}-min"), a.m,
                          make_alphas(a.m), chain, name=f"b_min[u{a.j + 1}]")
        upper = HOCBFSpec(Field(lambda U, c=umax: c - U[0], a.m, f"max-u{a.j + 1}"), a.m,
                          make_alphas(a.m), chain, name=f"b_max[u{a.j + 1}]")
        entries.append(BoundBarrier(a.j, umin, umax, chain, lower, upper))
    return IHOCBFSpec(b, sys, aug, spec, NuBoundCBFs(entries), degrees, probe)


def ihocbf_rows(spec: IHOCBFSpec, y) -> list[ConstraintRow]:
    """Main row in ``u_y = (u_n, nu)`` followed by two bound rows per chain."""
    return ihocbf_rows_with_psi(spec, y)[0]


def ihocbf_rows_with_psi(spec: IHOCBFSpec, y):
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise IHOCBFError(f"non-finite augmented state {y}")
    main, psi = hocbf_row_with_psi(spec.hocbf, y, tag="ihocbf")
    return [main] + spec.bounds.rows(spec.augmented, y), psi


def integrate_aux(spec: IHOCBFSpec, aux_state: Mapping[int, np.ndarray], nu, dt: float,
                  method: str = "rk4") -> dict:
    """Advance every chain by one step under constant ``nu``.

    ``nu`` is a mapping ``{j: nu_j}`` or a sequence aligned with ``spec.aux``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not isinstance(nu, Mapping):
        nu = {a.j: float(v) for a, v in zip(spec.aux, np.atleast_1d(nu))}
    out = {}
    for a in spec.aux:
        chain = a.as_system()
        out[a.j] = step_integrate(chain, aux_state[a.j], [nu[a.j]], dt, method)
    return out
