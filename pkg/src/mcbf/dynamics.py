"""Affine control systems ``x' = f(x) + g(x) u`` and fixed-step integration."""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from .jets import cos, sin

if TYPE_CHECKING:  # pragma: no cover
    from .integral import AuxiliaryDynamics


class SimulationError(FloatingPointError):
    pass


@dataclass(frozen=True)
class ControlBounds:
    u_min: np.ndarray
    u_max: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.u_min, dtype=float))
        hi = np.atleast_1d(np.asarray(self.u_max, dtype=float))
        if lo.shape != hi.shape:
            raise ValueError("u_min and u_max must have the same shape")
        if np.any(lo > hi):
            raise ValueError(f"u_min must not exceed u_max componentwise: {lo} vs {hi}")
        object.__setattr__(self, "u_min", lo)
        object.__setattr__(self, "u_max", hi)

    @classmethod
    def unbounded(cls, q: int) -> "ControlBounds":
        return cls(np.full(q, -np.inf), np.full(q, np.inf))

    @property
    def q(self) -> int:
        return self.u_min.shape[0]


class AffineControlSystem:
    """Affine control system with polymorphic vector fields.

    Args:
        n: state dimension.
        q: control dimension.
        f: ``f(state) -> sequence of n scalars``.
        g: ``g(state) -> n rows of q scalars``.
        bounds: control bounds; unbounded if omitted.
        labels: state component names.
        control_labels: control component names.
        domain: ``(lo, hi)`` box used for probing structural properties.

    ``f`` and ``g`` must be written with the primitives in :mod:`mcbf.jets`
    so they accept both floats and jets. Instances are treated as immutable.
    """

    def __init__(self, n: int, q: int, f: Callable, g: Callable,
                 bounds: ControlBounds | None = None,
                 labels: Sequence[str] | None = None,
                 control_labels: Sequence[str] | None = None,
                 domain: tuple | None = None):
        self.n = int(n)
        self.q = int(q)
        self._f = f
        self._g = g
        self.bounds = bounds if bounds is not None else ControlBounds.unbounded(q)
        if self.bounds.q != self.q:
            raise ValueError(f"bounds have {self.bounds.q} components, system has q={self.q}")
        self.labels = tuple(labels) if labels else tuple(f"x{i + 1}" for i in range(n))
        self.control_labels = (tuple(control_labels) if control_labels
                               else tuple(f"u{j + 1}" for j in range(q)))
        if domain is None:
            domain = (np.full(n, -10.0), np.full(n, 10.0))
        self.domain = (np.asarray(domain[0], dtype=float), np.asarray(domain[1], dtype=float))
        self._check_shapes()

    def _check_shapes(self):
        x = 0.5 * (self.domain[0] + self.domain[1])
        fx = self.f_at(x)
        gx = self.g_at(x)
        if fx.shape != (self.n,):
            raise ValueError(f"f returned shape {fx.shape}, expected ({self.n},)")
        if gx.shape != (self.n, self.q):
            raise ValueError(f"g returned shape {gx.shape}, expected ({self.n}, {self.q})")

    def f(self, X):
        return list(self._f(X))

    def g(self, X):
        return [list(row) for row in self._g(X)]

    def f_at(self, x) -> np.ndarray:
        return np.array(self._f([float(v) for v in x]), dtype=float)

    def g_at(self, x) -> np.ndarray:
        return np.array(self._g([float(v) for v in x]), dtype=float).reshape(self.n, self.q)

    def xdot(self, x, u) -> np.ndarray:
        return self.f_at(x) + self.g_at(x) @ np.asarray(u, dtype=float)

    def sample_states(self, rng: np.random.Generator, count: int) -> np.ndarray:
        lo, hi = self.domain
        return rng.uniform(lo, hi, size=(count, self.n))

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n}, q={self.q})"


@dataclass(frozen=True)
class UnicycleParams:
    M: float = 1650.0

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError(f"mass M must be positive, got {self.M}")


UNICYCLE_LABELS = ("x", "y", "v", "theta", "phi")


def make_unicycle(params: UnicycleParams, bounds: ControlBounds | None = None,
                  domain: tuple | None = None) -> AffineControlSystem:
    """Unicycle with states (x, y, v, theta, phi) and controls (u1, u2).

    ``theta' = phi``, ``phi' = u1`` (angular acceleration) and
    ``v' = u2 / M`` (driving force over mass).
    """
    M = float(params.M)
    if not M > 0:
        raise ValueError(f"mass M must be positive, got {M}")
    inv_m = 1.0 / M

    def f(s):
        return (s[2] * cos(s[3]), s[2] * sin(s[3]), 0.0, s[4], 0.0)

    def g(s):
        return ((0.0, 0.0), (0.0, 0.0), (0.0, inv_m), (0.0, 0.0), (1.0, 0.0))

    if domain is None:
        domain = (np.array([0.0, 0.0, 0.0, -np.pi, -0.7]),
                  np.array([70.0, 30.0, 5.0, np.pi, 0.7]))
    return AffineControlSystem(5, 2, f, g, bounds=bounds, labels=UNICYCLE_LABELS,
                               control_labels=("u1", "u2"), domain=domain)


class AugmentedSystem(AffineControlSystem):
    """Base system extended with auxiliary integrator chains.

    State ``y = (x, u_a)`` where ``u_a`` stacks each chain's state in the
    order given. The control ``u_y`` keeps the base control layout but the
    slot of every chained component ``j`` now carries ``nu_j``.
    """

    def __init__(self, base: AffineControlSystem, aux: Sequence["AuxiliaryDynamics"],
                 nu_bounds: dict | None = None):
        self.base = base
        self.aux = tuple(aux)
        seen = set()
        for a in self.aux:
            if not 0 <= a.j < base.q:
                raise ValueError(f"auxiliary chain references control index {a.j}, system has q={base.q}")
            if a.j in seen:
                raise ValueError(f"duplicate auxiliary chain for control index {a.j}")
            seen.add(a.j)
        self.chained = tuple(a.j for a in self.aux)
        offsets, off = {}, base.n
        for a in self.aux:
            offsets[a.j] = off
            off += a.m
        self.aux_offset = offsets
        self.state_map = {i: i for i in range(base.n)}
        self.control_map = tuple(("nu", j) if j in seen else ("u", j) for j in range(base.q))

        lo = base.bounds.u_min.copy()
        hi = base.bounds.u_max.copy()
        nu_bounds = nu_bounds or {}
        for a in self.aux:
            lo[a.j], hi[a.j] = nu_bounds.get(a.j, (-np.inf, np.inf))

        dlo = [base.domain[0]]
        dhi = [base.domain[1]]
        for a in self.aux:
            umin, umax = base.bounds.u_min[a.j], base.bounds.u_max[a.j]
            span = umax - umin if np.isfinite(umax - umin) else 2.0
            c_lo = np.full(a.m, -span)
            c_hi = np.full(a.m, span)
            c_lo[0] = umin if np.isfinite(umin) else -1.0
            c_hi[0] = umax if np.isfinite(umax) else 1.0
            dlo.append(c_lo)
            dhi.append(c_hi)

        labels = list(base.labels)
        clabels = list(base.control_labels)
        for a in self.aux:
            name = base.control_labels[a.j]
            labels += [name] + [f"{name}^({k})" for k in range(1, a.m)]
            clabels[a.j] = f"nu_{name}"
        super().__init__(off, base.q, self._F, self._G,
                         bounds=ControlBounds(lo, hi), labels=labels,
                         control_labels=clabels,
                         domain=(np.concatenate(dlo), np.concatenate(dhi)))

    def _F(self, Y):
        n = self.base.n
        X = Y[:n]
        fx = list(self.base._f(X))
        if self.aux:
            gx = self.base._g(X)
            for a in self.aux:
                uj = Y[self.aux_offset[a.j]]
                for i in range(n):
                    gij = gx[i][a.j]
                    if isinstance(gij, float) and gij == 0.0:
                        continue
                    fx[i] = fx[i] + gij * uj
        for a in self.aux:
            off = self.aux_offset[a.j]
            fx.extend(a.f_chain(Y[off:off + a.m]))
        return fx

    def _G(self, Y):
        n, q = self.base.n, self.base.q
        gx = self.base._g(Y[:n])
        rows = []
        for i in range(n):
            rows.append([0.0 if j in self.aux_offset else gx[i][j] for j in range(q)])
        for a in self.aux:
            off = self.aux_offset[a.j]
            gj = a.g_chain(Y[off:off + a.m])
            for k in range(a.m):
                row = [0.0] * q
                row[a.j] = gj[k]
                rows.append(row)
        return rows

    def split(self, y):
        """``y -> (x, {j: chain state})``."""
        y = np.asarray(y, dtype=float)
        n = self.base.n
        return y[:n].copy(), {a.j: y[self.aux_offset[a.j]:self.aux_offset[a.j] + a.m].copy()
                              for a in self.aux}

    def join(self, x, aux_states: dict) -> np.ndarray:
        parts = [np.asarray(x, dtype=float)]
        for a in self.aux:
            parts.append(np.asarray(aux_states[a.j], dtype=float).reshape(a.m))
        return np.concatenate(parts)

    def applied_control(self, y, u_y) -> np.ndarray:
        """Base-system control ``u`` realised by augmented state and input."""
        u = np.array(u_y, dtype=float)
        for a in self.aux:
            u[a.j] = y[self.aux_offset[a.j]]
        return u


def compose_augmented(base: AffineControlSystem, aux: Sequence["AuxiliaryDynamics"],
                      nu_bounds: dict | None = None) -> AugmentedSystem:
    return AugmentedSystem(base, aux, nu_bounds)


def clamp_to_bounds(u, bounds: ControlBounds) -> np.ndarray:
    return np.clip(np.asarray(u, dtype=float), bounds.u_min, bounds.u_max)


def step_integrate(sys: AffineControlSystem, x, u, dt: float, method: str = "rk4") -> np.ndarray:
    """Advance ``x`` by one fixed step.

    ``u`` is either a constant control (zero-order hold) or a callable
    ``u(tau)`` for ``tau`` in ``[0, dt]``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)
    ufun = u if callable(u) else (lambda tau, _u=np.asarray(u, dtype=float): _u)
    if method == "euler":
        out = x + dt * sys.xdot(x, ufun(0.0))
    elif method == "rk4":
        h = 0.5 * dt
        k1 = sys.xdot(x, ufun(0.0))
        k2 = sys.xdot(x + h * k1, ufun(h))
        k3 = sys.xdot(x + h * k2, ufun(h))
        k4 = sys.xdot(x + dt * k3, ufun(dt))
        out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    else:
        raise ValueError(f"unknown integrator {method!r} (expected 'euler' or 'rk4')")
    if not np.all(np.isfinite(out)):
        raise SimulationError(f"non-finite state after {method} step from {x.tolist()}")
    return out
