"""Class-K functions, the psi sequence and HOCBF constraint rows."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import ScalarField, expand_fields, lie_along_f, lie_along_g, lie_power
from .jets import Jet, value_of


class HOCBFError(ValueError):
    pass


class PrematureControlError(HOCBFError):
    """A control component shows up before the declared relative degree."""


class SmoothnessDeficitError(HOCBFError):
    pass


@dataclass(frozen=True)
class ClassK:
    """Class-K (or extended class-K) function.

    ``linear`` and ``extended_linear`` evaluate ``k * s``; ``power``
    evaluates ``k * s**p`` and is only defined for ``s >= 0`` on jets.
    ``smoothness`` is the declared number of continuous derivatives; ``None``
    means infinitely smooth and is only accepted for the linear kinds or
    natural-number powers.
    """

    kind: str = "linear"
    k: float = 1.0
    p: float = 1.0
    smoothness: int | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "extended_linear", "power"):
            raise ValueError(f"unknown class-K kind {self.kind!r}")
        if not self.k > 0:
            raise ValueError(f"class-K gain must be positive, got {self.k}")
        if self.kind == "power" and not self.p > 0:
            raise ValueError(f"class-K power must be positive, got {self.p}")

    @property
    def differentiability(self) -> float:
        if self.smoothness is not None:
            return self.smoothness
        if self.kind != "power" or float(self.p).is_integer():
            return float("inf")
        return 0

    def __call__(self, s):
        if self.kind != "power":
            return self.k * s
        if isinstance(s, Jet):
            return self.k * s ** self.p
        return self.k * s ** self.p if s >= 0 else -self.k * (-s) ** self.p


def linear(k: float = 1.0) -> ClassK:
    return ClassK("linear", k)


@dataclass(frozen=True)
class ConstraintRow:
    """Inequality ``a_u . u + slack * delta + rhs >= 0``."""

    a_u: np.ndarray
    rhs: float
    tag: str = ""
    slack: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.a_u, dtype=float).reshape(-1)
        object.__setattr__(self, "a_u", a)
        object.__setattr__(self, "rhs", float(self.rhs))
        if not (np.all(np.isfinite(a)) and np.isfinite(self.rhs)):
            raise HOCBFError(f"non-finite constraint row {self.tag!r}: a_u={a}, rhs={self.rhs}")

    def value(self, u, delta: float = 0.0) -> float:
        return float(self.a_u @ np.asarray(u, dtype=float) + self.rhs + self.slack * delta)


class HOCBFSpec:
    """Barrier ``b`` with declared relative degree ``m`` and class-K chain."""

    def __init__(self, b: ScalarField, m: int, alphas: Sequence[ClassK] | None, system,
                 name: str = "b"):
        if m < 1:
            raise ValueError(f"relative degree must be >= 1, got {m}")
        if b.arity != system.n:
            raise ValueError(f"barrier arity {b.arity} does not match state dimension {system.n}")
        alphas = tuple(alphas) if alphas is not None else tuple(linear() for _ in range(m))
        if len(alphas) != m:
            raise ValueError(f"need exactly m={m} class-K functions, got {len(alphas)}")
        for i, a in enumerate(alphas[:-1], start=1):
            if a.differentiability < m - i:
                raise SmoothnessDeficitError(
                    f"alpha_{i} must be {m - i} times differentiable, declared {a.differentiability}")
        self.b = b
        self.m = int(m)
        self.alphas = alphas
        self.system = system
        self.name = name
        self._psi = None

    def psi_sequence(self) -> "PsiSequence":
        if self._psi is None:
            self._psi = build_psi_sequence(self)
        return self._psi

    def __repr__(self):
        return f"HOCBFSpec({self.name}, m={self.m})"


@dataclass
class PsiSequence:
    spec: HOCBFSpec
    psi: list = field(default_factory=list)

    def values(self, x) -> np.ndarray:
        out = expand_fields(self.psi, x, max(f.depth for f in self.psi))
        return np.array([value_of(v) for v in out])

    def sets_contain(self, x, tol: float = 0.0) -> bool:
        """Whether ``x`` lies in every set ``{psi_i >= -tol}``."""
        return bool(np.all(self.values(x) >= -tol))


def build_psi_sequence(spec: HOCBFSpec, n_probes: int = 16, tol: float = 1e-9,
                       seed: int = 0, check: bool = True) -> PsiSequence:
    sys = spec.system
    psi = [spec.b]
    for i in range(1, spec.m):
        prev = psi[-1]
        psi.append(lie_along_f(prev, sys) + prev.map(spec.alphas[i - 1], name=f"alpha_{i}"))
    if check and spec.m > 1:
        rng = np.random.default_rng(seed)
        probes = sys.sample_states(rng, n_probes)
        for i, f in enumerate(psi[:-1]):
            row = lie_along_g(f, sys)
            worst = max(float(np.max(np.abs(row(x)))) for x in probes)
            if worst > tol:
                raise PrematureControlError(
                    f"control appears in the derivative of psi_{i} of {spec.name} "
                    f"(|L_g psi_{i}| up to {worst:.3g}); declared m={spec.m} is too large")
    return PsiSequence(spec, psi)


def hocbf_row_with_psi(spec: HOCBFSpec, x, tag: str | None = None) -> tuple[ConstraintRow, np.ndarray]:
    """Constraint row at ``x`` together with the snapshot ``psi_0..psi_{m-1}``."""
    seq = spec.psi_sequence()
    x = np.asarray(x, dtype=float)
    vals = expand_fields(seq.psi, x, spec.m)
    top = vals[-1]
    if isinstance(top, Jet):
        grad = top.gradient()
    else:
        grad = np.zeros(spec.system.n)
    sys = spec.system
    psi_top = value_of(top)
    a_u = grad @ sys.g_at(x)
    rhs = float(grad @ sys.f_at(x)) + float(spec.alphas[-1](psi_top))
    row = ConstraintRow(a_u, rhs, tag or spec.name)
    return row, np.array([value_of(v) for v in vals])


def hocbf_row(spec: HOCBFSpec, x, tag: str | None = None) -> ConstraintRow:
    return hocbf_row_with_psi(spec, x, tag)[0]


@dataclass
class RelativeDegreeSet:
    """Per-control relative degrees with the probe evidence behind them."""

    degrees: tuple
    max_magnitude: dict = field(default_factory=dict)
    n_probes: int = 0
    tol: float = 0.0
    cap: int = 0
    labels: tuple = ()
    declared: bool = False

    @classmethod
    def declare(cls, degrees: Sequence[int], labels: Sequence[str] = ()) -> "RelativeDegreeSet":
        degrees = tuple(int(k) for k in degrees)
        if any(k < 1 for k in degrees):
            raise ValueError("relative degrees must be >= 1")
        return cls(degrees, labels=tuple(labels), declared=True)

    @property
    def undetected(self) -> list[int]:
        return [j for j, k in enumerate(self.degrees) if k is None]

    @property
    def complete(self) -> bool:
        return not self.undetected

    @property
    def m_bar(self) -> int:
        return max(k for k in self.degrees if k is not None)

    @property
    def m_min(self) -> int:
        return min(k for k in self.degrees if k is not None)

    @property
    def uniform(self) -> bool:
        return self.complete and len(set(self.degrees)) == 1

    def as_dict(self) -> dict:
        labels = self.labels or tuple(f"u{j + 1}" for j in range(len(self.degrees)))
        return {
            "degrees": {lab: k for lab, k in zip(labels, self.degrees)},
            "undetected": [labels[j] for j in self.undetected],
            "probe_report": {
                "n_probes": self.n_probes,
                "tol": self.tol,
                "cap": self.cap,
                "declared": self.declared,
                "max_magnitude": {str(k): [float(v) for v in mags]
                                  for k, mags in self.max_magnitude.items()},
            },
        }


def detect_relative_degree_set(b: ScalarField, sys, domain: tuple | None = None, cap: int = 5,
                               n_probes: int = 64, tol: float = 1e-9,
                               seed: int = 0) -> RelativeDegreeSet:
    """Probe ``|L_g L_f^{k-1} b|`` on random states until every control shows up."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    lo, hi = domain if domain is not None else sys.domain
    rng = np.random.default_rng(seed)
    probes = rng.uniform(lo, hi, size=(n_probes, sys.n))
    degrees: list = [None] * sys.q
    mags = {}
    for k in range(1, cap + 1):
        row = lie_along_g(lie_power(b, sys, k - 1), sys)
        worst = np.zeros(sys.q)
        for x in probes:
            worst = np.maximum(worst, np.abs(row(x)))
        mags[k] = worst
        for j in range(sys.q):
            if degrees[j] is None and worst[j] > tol:
                degrees[j] = k
        if all(d is not None for d in degrees):
            break
    return RelativeDegreeSet(tuple(degrees), mags, n_probes, tol, cap,
                             labels=tuple(sys.control_labels))
