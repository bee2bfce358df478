"""NumPy twin of the dual active-set iteration in ``_qpcore.pyx``."""
import numpy as np

OPTIMAL, INFEASIBLE, DEGENERATE = 0, 1, 2


def gi_loop(Hinv, x0, Cn, dn, feas_tol, max_iter):
    """Goldfarb-Idnani iterations on unit-norm rows ``Cn z + dn >= 0``.

    Args:
        Hinv: inverse of the (free-variable) Hessian.
        x0: unconstrained minimizer.
        Cn, dn: constraint rows with unit-norm ``Cn`` rows.
        feas_tol: tolerance on row violation.
        max_iter: cap on primal/dual steps.

    Returns:
        ``(x, active, u, iterations, status, infeasible)`` where ``active``
        and ``infeasible`` index rows of ``Cn`` and ``u`` holds the active
        multipliers (same order as ``active``).
    """
    x = np.array(x0, dtype=float)
    active: list[int] = []
    u = np.zeros(0)
    it = 0
    status = DEGENERATE
    infeasible: list[int] = []
    while it < max_iter:
        s = Cn @ x + dn if len(dn) else np.zeros(0)
        if len(s) == 0 or s.min() >= -feas_tol:
            status = OPTIMAL
            break
        p = int(np.argmin(s))
        up = np.append(u, 0.0)
        added = False
        while it < max_iter:
            it += 1
            npv = Cn[p]
            if active:
                N = Cn[active].T
                HN = Hinv @ N
                r = np.linalg.solve(N.T @ HN, HN.T @ npv)
                zdir = Hinv @ npv - HN @ r
                if len(active) >= len(x):
                    # nf independent active rows span the space: no primal step left
                    zdir = np.zeros_like(x)
            else:
                r = np.zeros(0)
                zdir = Hinv @ npv
            t1, drop = np.inf, -1
            for k, rk in enumerate(r):
                if rk > 1e-12:
                    ratio = up[k] / rk
                    if ratio < t1:
                        t1, drop = ratio, k
            curv = float(zdir @ npv)
            scale = float(npv @ Hinv @ npv)
            t2 = np.inf if curv <= 1e-12 * scale else -float(npv @ x + dn[p]) / curv
            t = min(t1, t2)
            if not np.isfinite(t):
                status = INFEASIBLE
                infeasible = active + [p]
                break
            if np.isfinite(t2):
                x = x + t * zdir
            up[:-1] -= t * r
            up[-1] += t
            if t2 <= t1:
                active.append(p)
                u = up
                added = True
                break
            active.pop(drop)
            up = np.delete(up, drop)
        if status == INFEASIBLE or not added:
            break
    return x, np.array(active, dtype=np.intp), u, it, status, np.array(infeasible, dtype=np.intp)
