import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mcbf.autodiff import (Field, expand_fields, flow_derivatives, gradient, lie_along_g, lie_power)
from mcbf.dynamics import UnicycleParams, make_unicycle
from mcbf.jets import value_of
from mcbf.transform import CenterTransformParams, center_barrier, control_point_barrier

from oracles import central_gradient, sym_lf, sym_lglf

SYS = make_unicycle(UnicycleParams())
CP = control_point_barrier(35.0, 15.0, 6.5)
CENTER = center_barrier(CenterTransformParams(0.5, 1.0, 35.0, 15.0, 5.0))
KW = {
    "control_point": dict(x0=35.0, y0=15.0, margin=6.5),
    "center": dict(x0=35.0, y0=15.0, margin=6.0, d=0.5),
}

states = st.tuples(st.floats(0, 70), st.floats(0, 30), st.floats(0, 5), st.floats(-3.1, 3.1),
                   st.floats(-0.7, 0.7)).map(np.array)


@pytest.mark.parametrize("kind, b", [("control_point", CP), ("center", CENTER)])
@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_nested_lie_matches_symbolic(kind, b, k, rng, kernel_backend):
    field = lie_power(b, SYS, k)
    for x in SYS.sample_states(rng, 20):
        assert field(x) == pytest.approx(sym_lf(kind, k, tuple(x), **KW[kind]), rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("kind, b", [("control_point", CP), ("center", CENTER)])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_control_row_matches_symbolic(kind, b, k, rng):
    row = lie_along_g(lie_power(b, SYS, k - 1), SYS)
    for x in SYS.sample_states(rng, 20):
        np.testing.assert_allclose(row(x), sym_lglf(kind, k, tuple(x), **KW[kind]), rtol=1e-10, atol=1e-14)


@given(states)
def test_flow_jets_agree_with_nested_fields(x):
    if np.hypot(x[0] - 35.0, x[1] - 15.0) < 0.5:
        return
    flow = flow_derivatives(CP, SYS, x, 3)
    nested = [lie_power(CP, SYS, k)(x) for k in range(4)]
    np.testing.assert_allclose(flow, nested, rtol=1e-9, atol=1e-9)


def test_gradient_matches_central_differences(rng):
    for x in SYS.sample_states(rng, 10):
        np.testing.assert_allclose(gradient(CENTER, x), central_gradient(CENTER, x), rtol=1e-7, atol=1e-8)


def test_shared_memo_gives_same_values(rng):
    fields = [lie_power(CP, SYS, k) for k in range(3)]
    x = SYS.sample_states(rng, 1)[0]
    together = [value_of(v) for v in expand_fields(fields, x, 3)]
    alone = [f(x) for f in fields]
    np.testing.assert_allclose(together, alone, rtol=1e-14)


def test_field_algebra():
    a = Field(lambda s: s[0] * s[1], 2)
    b = Field(lambda s: s[0] - s[1], 2)
    x = np.array([2.0, 3.0])
    assert (a + b)(x) == 5.0
    assert (a - 1.0)(x) == 5.0
    assert (2.0 * a * b)(x) == -12.0
    assert (-b)(x) == 1.0
    assert a.map(lambda v: 3 * v)(x) == 18.0


def test_arity_checks():
    with pytest.raises(ValueError):
        CP(np.zeros(3))
    with pytest.raises(ValueError):
        lie_power(Field(lambda s: s[0], 2), SYS, 1)


def test_flow_rejects_nested_fields():
    with pytest.raises(ValueError):
        flow_derivatives(lie_power(CP, SYS, 1), SYS, np.ones(5), 2)
