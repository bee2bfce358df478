import numpy as np
import pytest

from mcbf.autodiff import Field
from mcbf.barrier import HOCBFSpec, RelativeDegreeSet, detect_relative_degree_set, hocbf_row, linear
from mcbf.dynamics import AffineControlSystem, ControlBounds, UnicycleParams, make_unicycle
from mcbf.integral import (AuxiliaryDynamics, IHOCBFError, build_ihocbf, ihocbf_rows, integrate_aux)
from mcbf.jets import cos, sin, sqrt
from mcbf.transform import control_point_barrier

M = 1650.0
BOUNDS = ControlBounds([-0.3491, -3 * M], [0.3491, 3 * M])
SYS = make_unicycle(UnicycleParams(M), BOUNDS)
CP = control_point_barrier(35.0, 15.0, 6.5)


@pytest.fixture(scope="module")
def spec():
    return build_ihocbf(CP, SYS, detect_relative_degree_set(CP, SYS), bound_alphas=5.0)


def hand_augmented():
    """The augmented unicycle written out by hand: state (x, y, v, theta, phi, u2)."""
    def f(s):
        return (s[2] * cos(s[3]), s[2] * sin(s[3]), s[5] * (1.0 / M), s[4], 0.0, 0.0)

    def g(s):
        return ((0.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0), (1.0, 0.0), (0.0, 1.0))

    return AffineControlSystem(6, 2, f, g)


def test_structure(spec):
    assert spec.m_bar == 3
    assert [(a.j, a.m) for a in spec.aux] == [(1, 1)]
    assert spec.augmented.n == 6
    assert spec.probe.degrees == (3, 3)
    rows = ihocbf_rows(spec, np.r_[10.0, 15.0, 5.0, 0.0, 0.0, 0.0])
    assert [r.tag for r in rows] == ["ihocbf", "nu_bound_min[u2]", "nu_bound_max[u2]"]


def test_main_row_matches_hand_built_augmented_system(spec, rng):
    aug = hand_augmented()
    b6 = Field(lambda s: sqrt((s[0] - 35.0) ** 2 + (s[1] - 15.0) ** 2) - 6.5, 6)
    ref = HOCBFSpec(b6, 3, None, aug)
    lo, hi = spec.augmented.domain
    for y in rng.uniform(lo, hi, size=(100, 6)):
        mine = ihocbf_rows(spec, y)[0]
        theirs = hocbf_row(ref, y)
        np.testing.assert_allclose(mine.a_u, theirs.a_u, rtol=0, atol=1e-10)
        assert abs(mine.rhs - theirs.rhs) <= 1e-10 * max(1.0, abs(theirs.rhs))


def test_both_inputs_enter_main_row(spec):
    row = ihocbf_rows(spec, np.r_[20.0, 12.0, 4.0, 0.3, 0.1, 100.0])[0]
    assert row.a_u[0] != 0.0 and row.a_u[1] != 0.0


def test_bound_rows(spec):
    u2 = 1000.0
    rows = ihocbf_rows(spec, np.r_[10.0, 15.0, 5.0, 0.0, 0.0, u2])[1:]
    lo, hi = rows
    np.testing.assert_array_equal(lo.a_u, [0.0, 1.0])
    np.testing.assert_array_equal(hi.a_u, [0.0, -1.0])
    assert lo.rhs == pytest.approx(5.0 * (u2 + 3 * M))
    assert hi.rhs == pytest.approx(5.0 * (3 * M - u2))


def test_incomplete_degree_set_rejected():
    with pytest.raises(IHOCBFError):
        build_ihocbf(CP, SYS, RelativeDegreeSet((None, 2)))


def test_wrong_chain_length_rejected():
    with pytest.raises(IHOCBFError):
        build_ihocbf(CP, SYS, RelativeDegreeSet.declare([3, 2]), chains={1: AuxiliaryDynamics(1, 2)})


def test_declared_degree_too_low_fails_probe():
    # pretending u2 already appears at order 3 leaves the augmented input out
    with pytest.raises(IHOCBFError):
        build_ihocbf(CP, SYS, RelativeDegreeSet.declare([4, 2]))


def test_linear_chain_accepted():
    chain = AuxiliaryDynamics(1, 1, A=[[-0.5]], B=[2.0])
    spec = build_ihocbf(CP, SYS, RelativeDegreeSet.declare([3, 2]), chains={1: chain})
    assert spec.probe.degrees == (3, 3)


def test_aux_initial_state():
    a = AuxiliaryDynamics(1, 2)
    np.testing.assert_array_equal(a.initial_state(-1.0, 1.0), [0.0, 0.0])
    assert a.initial_state(1.0, 3.0)[0] == 2.0
    with pytest.raises(IHOCBFError):
        AuxiliaryDynamics(1, 1, u0=[5.0]).initial_state(-1.0, 1.0)
    with pytest.raises(ValueError):
        AuxiliaryDynamics(1, 0)


def test_integrate_aux_pure_integrator(spec):
    out = integrate_aux(spec, {1: np.array([100.0])}, [250.0], 0.1)
    assert out[1][0] == pytest.approx(125.0)
    with pytest.raises(ValueError):
        integrate_aux(spec, {1: np.array([0.0])}, [1.0], 0.0)


def test_nonfinite_state_rejected(spec):
    with pytest.raises(IHOCBFError):
        ihocbf_rows(spec, np.r_[np.nan, 15.0, 5.0, 0.0, 0.0, 0.0])


def test_bound_alphas_sequence():
    spec = build_ihocbf(CP, SYS, RelativeDegreeSet.declare([3, 2]), bound_alphas=[linear(2.0)])
    lo = ihocbf_rows(spec, np.r_[10.0, 15.0, 5.0, 0.0, 0.0, 0.0])[1]
    assert lo.rhs == pytest.approx(2.0 * 3 * M)
