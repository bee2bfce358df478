"""Constraint transformation to a barrier of uniform relative degree.

For the unicycle the safety condition is moved from the control point
``(x, y)`` to the geometric center ``(x + d cos(theta), y + d sin(theta))``.
Because the center moves when the heading turns, both the steering input and
the driving force appear after two differentiations.
"""
from __future__ import annotations

from dataclasses import dataclass

from .autodiff import Field, ScalarField
from .barrier import (ClassK, ConstraintRow, HOCBFError, HOCBFSpec, RelativeDegreeSet,
                      detect_relative_degree_set, hocbf_row_with_psi)
from .dynamics import AffineControlSystem, UnicycleParams, make_unicycle
from .jets import cos, sin, sqrt


class TransformError(HOCBFError):
    pass


@dataclass(frozen=True)
class CenterTransformParams:
    d: float
    r_b: float
    x0: float
    y0: float
    r: float

    def __post_init__(self):
        if self.d < 0:
            raise ValueError(f"offset d must be non-negative, got {self.d}")
        if not self.r_b > 0:
            raise ValueError(f"body radius r_b must be positive, got {self.r_b}")
        if not self.r > 0:
            raise ValueError(f"obstacle radius r must be positive, got {self.r}")

    @property
    def r_v(self) -> float:
        """Farthest body point from the control point (circular body)."""
        return self.r_b + self.d


@dataclass
class TransformSpec:
    b_original: ScalarField
    b_T: ScalarField
    m_t: int
    system: AffineControlSystem
    degrees: RelativeDegreeSet
    hocbf: HOCBFSpec
    params: CenterTransformParams | None = None
    implication: str = ""

    def control_point_clearance_bound(self, b_t_value: float) -> float:
        """Lower bound on control-point clearance ``|p - o| - r`` given ``b_T``."""
        p = self.params
        return b_t_value + p.r_b - p.d


def control_point_barrier(x0: float, y0: float, margin: float) -> Field:
    """``sqrt((x - x0)^2 + (y - y0)^2) - margin`` on the control point."""
    return Field(lambda s: sqrt((s[0] - x0) ** 2 + (s[1] - y0) ** 2) - margin, 5,
                 f"cp_clearance({x0:g},{y0:g};{margin:g})")


def center_barrier(params: CenterTransformParams) -> Field:
    p = params
    margin = p.r + p.r_b

    def b_t(s):
        cx = s[0] + p.d * cos(s[3]) - p.x0
        cy = s[1] + p.d * sin(s[3]) - p.y0
        return sqrt(cx * cx + cy * cy) - margin

    return Field(b_t, 5, f"center_clearance({p.x0:g},{p.y0:g};{margin:g})")


def make_center_transform(params: CenterTransformParams, system: AffineControlSystem | None = None,
                          alphas: list[ClassK] | None = None, n_probes: int = 64,
                          tol: float = 1e-9, seed: int = 0) -> TransformSpec:
    """Transformed barrier on the unicycle's geometric center.

    Raises :class:`TransformError` if probing does not find a uniform
    relative degree (for instance ``d = 0``, where steering never enters the
    second derivative).
    """
    if system is None:
        system = make_unicycle(UnicycleParams())
    p = params
    b_orig = control_point_barrier(p.x0, p.y0, p.r + p.r_v)
    b_t = center_barrier(p)
    degrees = detect_relative_degree_set(b_t, system, cap=3, n_probes=n_probes, tol=tol, seed=seed)
    if not degrees.uniform:
        raise TransformError(
            f"transformed barrier has non-uniform relative degree {degrees.degrees} "
            f"(d={p.d}); all controls must appear at the same order")
    m_t = degrees.degrees[0]
    spec = HOCBFSpec(b_t, m_t, alphas, system, name="transform")
    spec.psi_sequence()
    note = (f"center clearance >= r + r_b keeps the whole circular body outside the obstacle; "
            f"the control point is then at least r + r_b - d = {p.r + p.r_b - p.d:g} away")
    return TransformSpec(b_orig, b_t, m_t, system, degrees, spec, p, note)


def transform_row(spec: TransformSpec, x) -> ConstraintRow:
    return hocbf_row_with_psi(spec.hocbf, x, tag="transform")[0]


def transform_row_with_psi(spec: TransformSpec, x):
    return hocbf_row_with_psi(spec.hocbf, x, tag="transform")
