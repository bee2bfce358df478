"""Soft CLF rows driving the unicycle toward a target position."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Field, ScalarField
from .barrier import ConstraintRow
from .jets import atan2, cos, jet_space, sin, sqrt, value_of


@dataclass
class CLFSpec:
    """``V`` with decay rate ``rate`` and slack weight ``p_slack``.

    The emitted row reads ``L_f V + L_g V u + rate * V <= delta``.
    """

    target: np.ndarray
    V: ScalarField
    rate: float = 1.0
    p_slack: float = 100.0

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=float)
        if not self.rate > 0:
            raise ValueError(f"CLF rate must be positive, got {self.rate}")
        if not self.p_slack > 0:
            raise ValueError(f"slack weight must be positive, got {self.p_slack}")


def clf_row(spec: CLFSpec, sys, x) -> ConstraintRow:
    """The CLF inequality in ``>= 0`` form with slack coefficient ``+1``."""
    x = np.asarray(x, dtype=float)
    P = spec.V._cached(jet_space(sys.n, spec.V.depth + 1).variables(x), {})
    v = value_of(P)
    grad = P.gradient() if hasattr(P, "gradient") else np.zeros(sys.n)
    lf = float(grad @ sys.f_at(x))
    lg = grad @ sys.g_at(x)
    return ConstraintRow(-lg, -(lf + spec.rate * v), tag="clf", slack=1.0)


def heading_error(s, xd: float, yd: float):
    """Signed angle from the heading to the line of sight to ``(xd, yd)``."""
    dx, dy = xd - s[0], yd - s[1]
    c, sn = cos(s[3]), sin(s[3])
    return atan2(c * dy - sn * dx, c * dx + sn * dy)


def make_unicycle_clf(target, M: float, v_ref: float, *, integral: bool = False,
                      k_theta: float = 2.0, k_v: float = 1.0, rho_slow: float = 5.0,
                      rate: float = 1.0, p_slack: float = 100.0) -> CLFSpec:
    """Steering surrogate CLF of relative degree one in the decision inputs.

    ``V = (v - v_des)^2 + (phi - k_theta * e_theta)^2`` where ``e_theta`` is
    the heading error to the target and ``v_des`` saturates at ``v_ref``,
    slows down within ``rho_slow`` of the target and when the heading is off.
    With ``integral=True`` the state carries ``u2`` as a sixth coordinate
    and the speed term becomes ``(u2 / M - k_v (v_des - v))^2``.
    """
    xd, yd = (float(t) for t in target)
    inv_m = 1.0 / M

    def parts(s):
        dx, dy = xd - s[0], yd - s[1]
        rho2 = dx * dx + dy * dy
        if value_of(rho2) < 1e-18:
            # at the target: stop, no heading to track
            return 0.0 * s[0], 0.0
        rho = sqrt(rho2)
        e = heading_error(s, xd, yd)
        align = 0.5 + 0.5 * (cos(s[3]) * dx + sin(s[3]) * dy) / rho
        v_des = v_ref * align * rho / sqrt(rho * rho + rho_slow * rho_slow)
        return e, v_des

    if integral:
        def V(s):
            e, v_des = parts(s)
            a = s[5] * inv_m - k_v * (v_des - s[2])
            w = s[4] - k_theta * e
            return a * a + w * w
        arity = 6
    else:
        def V(s):
            e, v_des = parts(s)
            a = s[2] - v_des
            w = s[4] - k_theta * e
            return a * a + w * w
        arity = 5
    return CLFSpec(np.array([xd, yd]), Field(V, arity, "clf"), rate, p_slack)
