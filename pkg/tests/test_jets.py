import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from mcbf import backend
from mcbf.jets import Jet, NonSmoothError, atan2, cos, exp, jet_space, lie_combine, log, sin, sqrt

finite = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False)


def _coefficients_sympy(expr, syms, point, order):
    """Taylor coefficients in graded monomial order via symbolic differentiation."""
    space = jet_space(len(syms), order)
    subs = dict(zip(syms, point))
    out = []
    for mono in space.monomials:
        e = expr
        for s, k in zip(syms, mono):
            if k:
                e = sp.diff(e, s, k)
        denom = math.prod(math.factorial(k) for k in mono)
        out.append(float(e.subs(subs)) / denom)
    return np.array(out)


def test_variables_are_identity_jets():
    sp_ = jet_space(3, 2)
    xs = sp_.variables([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(xs[1].gradient(), [0.0, 1.0, 0.0])
    assert xs[2].value == 3.0


def test_monomial_count():
    # C(n + k, k)
    assert jet_space(5, 3).size == math.comb(8, 3)
    assert jet_space(6, 3).size == math.comb(9, 3)


def test_composite_matches_symbolic_taylor(kernel_backend):
    a, b = sp.symbols("a b", real=True)
    expr = (sp.sin(a * b) + sp.exp(a) / (1 + b ** 2) + sp.sqrt(a ** 2 + b ** 2 + 1) * sp.cos(b)
            + sp.atan2(b + 2, a + 3) + sp.log(a + 4))
    point = (0.3, -0.7)
    order = 4
    A, B = jet_space(2, order).variables(point)
    J = sin(A * B) + exp(A) / (1 + B ** 2) + sqrt(A ** 2 + B ** 2 + 1) * cos(B) + atan2(B + 2, A + 3) + log(A + 4)
    np.testing.assert_allclose(J.c, _coefficients_sympy(expr, (a, b), point, order), rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_backends_agree_bitwise(order, rng):
    if not backend.compiled_available():
        pytest.skip("compiled kernels not built")
    sp_ = jet_space(5, order)
    a = rng.normal(size=sp_.size)
    b = rng.normal(size=sp_.size)
    F = rng.normal(size=(5, sp_.size))
    coeffs = rng.normal(size=order + 1)
    from mcbf import _jetcore, _jetcore_py
    c_out = (_jetcore.mul(a, b, sp_.I, sp_.J, sp_.K), _jetcore.horner(coeffs, b, sp_.I, sp_.J, sp_.K),
             _jetcore.lie(a, F, sp_.dsrc, sp_.ddst, sp_.dfac, sp_.dptr, sp_.I, sp_.J, sp_.K))
    p_out = (_jetcore_py.mul(a, b, sp_.I, sp_.J, sp_.K), _jetcore_py.horner(coeffs, b, sp_.I, sp_.J, sp_.K),
             _jetcore_py.lie(a, F, sp_.dsrc, sp_.ddst, sp_.dfac, sp_.dptr, sp_.I, sp_.J, sp_.K))
    for c, p in zip(c_out, p_out):
        np.testing.assert_array_equal(c, p)


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError):
        backend.set_backend("fortran")


def test_pure_python_env_var_selects_fallback():
    import subprocess
    import sys
    code = "import mcbf.backend as b; print(b.active())"
    out = subprocess.run([sys.executable, "-c", code], env={"MCBF_PURE_PYTHON": "1", "PATH": ""},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@given(finite, finite)
def test_pythagorean_identity(a, b):
    x, _ = jet_space(2, 3).variables([a, b])
    one = sin(x) ** 2 + cos(x) ** 2
    np.testing.assert_allclose(one.c, np.r_[1.0, np.zeros(one.c.size - 1)], atol=1e-12)


@given(st.floats(0.1, 5.0), finite)
def test_exp_log_roundtrip(a, b):
    x, y = jet_space(2, 3).variables([a, b])
    np.testing.assert_allclose(exp(log(x)).c, x.c, rtol=1e-11, atol=1e-11)


@given(finite, finite, finite)
def test_product_rule(a, b, c):
    x, y, z = jet_space(3, 2).variables([a, b, c])
    p = (x * y) * z
    np.testing.assert_allclose(p.gradient(), [b * c, a * c, a * b], rtol=1e-12, atol=1e-12)


@given(st.floats(0.5, 4.0), finite)
def test_reciprocal_times_self(a, b):
    x, y = jet_space(2, 4).variables([a, b])
    w = x + y * y
    if abs(w.value) < 0.1:
        return
    r = w * (1.0 / w)
    np.testing.assert_allclose(r.c, np.r_[1.0, np.zeros(r.c.size - 1)], atol=1e-10)


def test_derivative_lowers_order():
    x, y = jet_space(2, 3).variables([1.0, 2.0])
    h = x * x * y
    dh = h.derivative(0)  # 2xy
    assert dh.order == 2
    assert dh.value == pytest.approx(4.0)
    np.testing.assert_allclose(dh.gradient(), [4.0, 2.0])


def test_lie_combine_matches_gradient_dot_field(rng):
    sp_ = jet_space(3, 2)
    X = sp_.variables(rng.normal(size=3))
    h = sin(X[0]) * X[1] + X[2] ** 2
    F = [X[1], 2.0, X[0] * X[2]]
    L = lie_combine(h, F)
    expected = h.gradient() @ np.array([X[1].value, 2.0, X[0].value * X[2].value])
    assert L.value == pytest.approx(expected, rel=1e-13)
    assert L.order == 1


@pytest.mark.parametrize("fn, arg", [(sqrt, 0.0), (log, -1.0), (sqrt, -2.0)])
def test_non_smooth_points_raise(fn, arg):
    x, = jet_space(1, 2).variables([arg])
    with pytest.raises(NonSmoothError) as err:
        fn(x)
    assert err.value.primitive


def test_atan2_at_origin_raises():
    x, y = jet_space(2, 1).variables([0.0, 0.0])
    with pytest.raises(NonSmoothError):
        atan2(y, x)


def test_float_fallbacks_match_math():
    assert sin(0.3) == math.sin(0.3)
    assert sqrt(4.0) == 2.0
    assert atan2(1.0, -1.0) == pytest.approx(math.atan2(1.0, -1.0))


def test_mixing_spaces_is_rejected():
    a, = jet_space(1, 2).variables([1.0])
    b, = jet_space(1, 3).variables([1.0])
    with pytest.raises(ValueError):
        a + b


def test_numpy_scalar_on_left():
    x, = jet_space(1, 2).variables([2.0])
    r = np.float64(3.0) * x
    assert isinstance(r, Jet)
    assert r.value == 6.0


def test_backend_module_reports_active():
    assert backend.active() in ("python", "compiled")
    assert (backend.jet is backend._jetcore_py) == (backend.active() == "python")
