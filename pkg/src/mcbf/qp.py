"""Dense strictly convex QP for the per-step safety filter.

Problem form::

    minimize    1/2 z' H z + f' z
    subject to  A z + b >= 0,   lb <= z <= ub

Solved with the Goldfarb-Idnani dual active-set method: start from the
unconstrained minimizer, repeatedly add the most violated constraint, take
partial steps that drop constraints whose multipliers would turn negative,
and stop at a KKT point. If a violated constraint can be neither reached by a
primal step nor compensated by dropping a constraint, the constraints are
inconsistent and the violated row together with the active set is reported as
an infeasible subset.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import backend as _backend
from .barrier import ConstraintRow

MODES = ("standard", "integral", "transform")
_STATUS = {0: "optimal", 1: "infeasible", 2: "degenerate"}


@dataclass
class QPProblem:
    H: np.ndarray
    f: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    names: tuple = ()
    row_tags: tuple = ()
    scale: np.ndarray | None = None
    regularized: bool = False

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = self.H.shape[0]
        if self.H.shape != (n, n):
            raise ValueError("H must be square")
        if np.abs(self.H - self.H.T).max() > 1e-12 * max(1.0, np.abs(self.H).max()):
            raise ValueError("H must be symmetric")
        self.f = np.asarray(self.f, dtype=float).reshape(n)
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.b.shape[0] != self.A.shape[0]:
            raise ValueError("A and b disagree on the number of rows")
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float).reshape(n)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).reshape(n)
        if np.any(self.lb > self.ub):
            raise ValueError("lb must not exceed ub")
        if np.linalg.eigvalsh(self.H).min() < 1e-10:
            self.H = self.H + 1e-9 * np.eye(n)
            self.regularized = True

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.H @ z + self.f @ z)

    def all_rows(self) -> tuple[np.ndarray, np.ndarray, list]:
        """General rows followed by finite box rows, all as ``C z + d >= 0``."""
        n = self.n
        C, d, tags = [self.A], [self.b], list(self.row_tags) or [f"row{i}" for i in range(len(self.b))]
        eye = np.eye(n)
        for i in range(n):
            if np.isfinite(self.lb[i]):
                C.append(eye[i:i + 1])
                d.append([-self.lb[i]])
                tags.append(f"lb[{self._name(i)}]")
            if np.isfinite(self.ub[i]):
                C.append(-eye[i:i + 1])
                d.append([self.ub[i]])
                tags.append(f"ub[{self._name(i)}]")
        return np.vstack(C), np.concatenate([np.asarray(x, dtype=float) for x in d]), tags

    def _name(self, i):
        return self.names[i] if self.names else f"z{i}"


@dataclass
class QPSolution:
    z: np.ndarray
    status: str
    active: list = field(default_factory=list)
    objective: float = float("nan")
    iterations: int = 0
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    kkt: dict = field(default_factory=dict)
    infeasible_subset: list = field(default_factory=list)
    active_tags: list = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def solve(problem: QPProblem, max_iter: int = 500, feas_tol: float = 1e-11) -> QPSolution:
    C_full, d_full, tags = problem.all_rows()
    n = problem.n
    fixed = np.isfinite(problem.lb) & (problem.lb == problem.ub)
    free = ~fixed
    z = np.zeros(n)
    z[fixed] = problem.lb[fixed]

    # Box rows of fixed variables vanish after substitution.
    keep = np.ones(len(d_full), dtype=bool)
    nrow = problem.A.shape[0]
    box_var = [None] * nrow
    for i in range(n):
        if np.isfinite(problem.lb[i]):
            box_var.append(i)
        if np.isfinite(problem.ub[i]):
            box_var.append(i)
    for r, v in enumerate(box_var):
        if v is not None and fixed[v]:
            keep[r] = False
    idx = np.flatnonzero(keep)
    C = C_full[idx][:, free]
    d = d_full[idx] + C_full[idx][:, fixed] @ z[fixed]
    Hf = problem.H[free][:, free]
    ff = problem.f[free] + problem.H[free][:, fixed] @ z[fixed]

    norms = np.linalg.norm(C, axis=1) if C.size else np.zeros(len(idx))
    zero_rows = norms <= 1e-14 * max(1.0, norms.max(initial=0.0))
    bad = [int(idx[r]) for r in np.flatnonzero(zero_rows & (d < -feas_tol))]
    if bad:
        return _finish(problem, C_full, d_full, tags, z, "infeasible", [], np.zeros(0), 0,
                       infeasible=bad[:1])
    live = np.flatnonzero(~zero_rows)
    Cn = C[live] / norms[live, None]
    dn = d[live] / norms[live]
    row_id = idx[live]

    nf = int(free.sum())
    if nf == 0:
        status = "optimal" if np.all(dn >= -feas_tol) else "infeasible"
        worst = [int(row_id[np.argmin(dn)])] if status == "infeasible" else []
        return _finish(problem, C_full, d_full, tags, z, status, [], np.zeros(0), 0, infeasible=worst)

    Linv = np.linalg.inv(np.linalg.cholesky(Hf))
    Hinv = np.ascontiguousarray(Linv.T @ Linv)
    x, act_live, u, it, code, bad_live = _backend.qp.gi_loop(
        Hinv, -Hinv @ ff, np.ascontiguousarray(Cn), np.ascontiguousarray(dn), feas_tol, max_iter)
    status = _STATUS[code]
    infeasible = [int(row_id[k]) for k in bad_live]
    active = [int(k) for k in act_live]
    u = np.asarray(u[:len(active)], dtype=float)
    if status == "optimal" and active:
        x, u = _polish(Hf, ff, Cn, dn, active, np.asarray(x, dtype=float), u, feas_tol)
    z[free] = x
    mult = np.zeros(len(d_full))
    for k, a in enumerate(active):
        mult[row_id[a]] = u[k] / norms[live[a]]
    act = [int(row_id[a]) for a in active]
    return _finish(problem, C_full, d_full, tags, z, status, act, mult, it, infeasible=infeasible)


def _polish(H, f, Cn, dn, active, x, u, feas_tol):
    """Re-solve the equality problem on the final active set (null-space method).

    The dual iterations accumulate rounding in ``x``; with nearly dependent
    active rows the multipliers are large and that error shows up in the
    complementarity residual. The direct solve is kept only if it stays primal
    and dual feasible and lowers the residual.
    """
    A = Cn[active]
    na, n = A.shape
    if na > n:
        return x, u
    try:
        Q, R = np.linalg.qr(A.T, mode="complete")
        Y, Z, R1 = Q[:, :na], Q[:, na:], R[:na]
        xr = Y @ np.linalg.solve(R1.T, -dn[active])
        if na < n:
            xr = xr + Z @ np.linalg.solve(Z.T @ H @ Z, -Z.T @ (H @ xr + f))
        ur = np.linalg.solve(R1, Y.T @ (H @ xr + f))
    except np.linalg.LinAlgError:
        return x, u

    def resid(xv, uv):
        s = Cn @ xv + dn
        return max(np.abs(H @ xv + f - A.T @ uv).max(initial=0.0), np.abs(uv * s[active]).max(initial=0.0))

    if (np.all(np.isfinite(xr)) and np.all(np.isfinite(ur)) and (Cn @ xr + dn).min(initial=0.0) >= -feas_tol
            and ur.min() >= 0.0 and resid(xr, ur) < resid(x, u)):
        return xr, ur
    return x, u


def _finish(problem, C, d, tags, z, status, active, mult, it, infeasible=()):
    sol = QPSolution(z=z, status=status, active=sorted(active), iterations=it,
                     multipliers=mult if len(mult) else np.zeros(len(d)),
                     infeasible_subset=sorted(set(infeasible)))
    sol.objective = problem.objective(z)
    sol.active_tags = [tags[i] for i in sol.active]
    sol.kkt = kkt_residuals(problem, z, sol.multipliers, C, d)
    return sol


def kkt_residuals(problem: QPProblem, z, mult, C=None, d=None) -> dict:
    """Stationarity (free variables only), primal feasibility and complementarity."""
    if C is None:
        C, d, _ = problem.all_rows()
    z = np.asarray(z, dtype=float)
    s = C @ z + d if len(d) else np.zeros(0)
    free = ~(np.isfinite(problem.lb) & (problem.lb == problem.ub))
    grad = problem.H @ z + problem.f - (C.T @ mult if len(d) else 0.0)
    return {
        "stationarity": float(np.abs(grad[free]).max(initial=0.0)),
        "primal": float(max(0.0, -s.min(initial=0.0))),
        "complementarity": float(np.abs(mult * s).max(initial=0.0)),
        "dual": float(max(0.0, -np.min(mult, initial=0.0))),
    }


def assemble_step_qp(mode: str, rows: Sequence[ConstraintRow], clf: ConstraintRow | None,
                     lb, ub, *, weights=None, p_slack: float = 100.0, scale=None,
                     pinned: dict | None = None, control_names: Sequence[str] | None = None) -> QPProblem:
    """Per-step QP over ``(controls / scale, delta)``.

    Hard rows come from the barrier modules; the CLF row, if any, is relaxed by
    the slack ``delta >= 0`` weighted by ``p_slack``. The cost is
    ``sum_i weights_i * (u_i / scale_i)^2 + p_slack * delta^2``. Entries of
    ``pinned`` fix a control to a value (it stays in the decision vector).
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    lb = np.asarray(lb, dtype=float).reshape(-1)
    ub = np.asarray(ub, dtype=float).reshape(-1)
    q = lb.shape[0]
    if ub.shape[0] != q:
        raise ValueError("lb and ub lengths differ")
    scale = np.ones(q) if scale is None else np.asarray(scale, dtype=float).reshape(q)
    weights = np.ones(q) if weights is None else np.asarray(weights, dtype=float).reshape(q)
    for r in list(rows) + ([clf] if clf is not None else []):
        if r.a_u.shape[0] != q:
            raise ValueError(f"row {r.tag!r} has {r.a_u.shape[0]} control coefficients, expected {q}")
    if control_names is None:
        if mode == "integral" and q == 2:
            control_names = ("u1", "nu")
        else:
            control_names = tuple(f"u{i + 1}" for i in range(q))
    has_slack = clf is not None
    nz = q + (1 if has_slack else 0)
    H = np.zeros((nz, nz))
    H[:q, :q] = np.diag(2.0 * weights)
    A, b, tags = [], [], []
    for r in rows:
        A.append(np.concatenate([r.a_u * scale, [r.slack] if has_slack else []]))
        b.append(r.rhs)
        tags.append(r.tag)
    zlb = np.concatenate([lb / scale, [0.0] if has_slack else []])
    zub = np.concatenate([ub / scale, [np.inf] if has_slack else []])
    if has_slack:
        H[q, q] = 2.0 * p_slack
        A.append(np.concatenate([clf.a_u * scale, [clf.slack]]))
        b.append(clf.rhs)
        tags.append(clf.tag)
    for j, val in (pinned or {}).items():
        zlb[j] = zub[j] = val / scale[j]
    names = tuple(control_names) + (("delta",) if has_slack else ())
    return QPProblem(H, np.zeros(nz), np.array(A).reshape(-1, nz), np.array(b, dtype=float),
                     zlb, zub, names=names, row_tags=tuple(tags),
                     scale=np.concatenate([scale, [1.0] if has_slack else []]))


def unscale(problem: QPProblem, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return z * problem.scale if problem.scale is not None else z
