import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mcbf.barrier import ConstraintRow
from mcbf.qp import QPProblem, assemble_step_qp, kkt_residuals, solve, unscale

from oracles import enumerate_qp, feasibility_margin, random_qp


def _oracle(problem):
    C, d, _ = problem.all_rows()
    return enumerate_qp(problem.H, problem.f, C, d)


def test_projection_onto_halfspace():
    sol = solve(QPProblem(np.eye(3), np.zeros(3), [[1.0, 0.0, 0.0]], [-1.0]))
    np.testing.assert_allclose(sol.z, [1.0, 0.0, 0.0], atol=1e-12)
    assert sol.optimal and sol.active == [0]


def test_symmetric_projection():
    sol = solve(QPProblem(np.eye(2), np.zeros(2), [[1.0, 1.0]], [-2.0]))
    np.testing.assert_allclose(sol.z, [1.0, 1.0], atol=1e-12)


def test_unconstrained_minimizer():
    sol = solve(QPProblem(2 * np.eye(2), [-2.0, 4.0], np.zeros((0, 2)), []))
    np.testing.assert_allclose(sol.z, [1.0, -2.0])
    assert sol.iterations == 0


@pytest.mark.parametrize("seed", range(4))
def test_matches_enumeration(seed, kernel_backend):
    rng = np.random.default_rng(seed)
    checked = 0
    while checked < 60:
        H, f, A, b, lb, ub = random_qp(rng)
        p = QPProblem(H, f, A, b, lb, ub)
        C, d, _ = p.all_rows()
        if abs(feasibility_margin(C, d, lb, ub)) < 1e-6:
            continue
        status, z, obj = _oracle(p)
        sol = solve(p)
        assert sol.status == status
        if status == "optimal":
            assert sol.objective == pytest.approx(obj, abs=1e-6, rel=1e-9)
            assert max(sol.kkt.values()) <= 1e-7
        checked += 1


def test_infeasible_subset_is_itself_infeasible(rng):
    found = 0
    while found < 30:
        H, f, A, b, lb, ub = random_qp(rng, kind="infeasible")
        p = QPProblem(H, f, A, b, lb, ub)
        sol = solve(p)
        assert sol.status == "infeasible"
        C, d, _ = p.all_rows()
        S = sol.infeasible_subset
        assert S
        status, _, _ = enumerate_qp(H, f, C[S], d[S])
        assert status == "infeasible"
        found += 1


def test_fixed_variables_are_eliminated():
    p = QPProblem(np.eye(2), np.zeros(2), [[1.0, 1.0]], [-1.0], lb=[0.25, -np.inf], ub=[0.25, np.inf])
    sol = solve(p)
    np.testing.assert_allclose(sol.z, [0.25, 0.75])
    assert sol.kkt["stationarity"] <= 1e-12


def test_all_fixed():
    p = QPProblem(np.eye(1), [0.0], [[1.0]], [-2.0], lb=[1.0], ub=[1.0])
    sol = solve(p)
    assert sol.status == "infeasible"
    p = QPProblem(np.eye(1), [0.0], [[1.0]], [-0.5], lb=[1.0], ub=[1.0])
    assert solve(p).optimal


def test_zero_row_with_negative_rhs():
    sol = solve(QPProblem(np.eye(2), np.zeros(2), [[0.0, 0.0]], [-1.0]))
    assert sol.status == "infeasible"
    assert sol.infeasible_subset == [0]


def test_regularization_recorded():
    p = QPProblem(np.diag([1.0, 0.0]), [0.0, 1.0], [[0.0, 1.0]], [1.0])
    assert p.regularized
    assert solve(p).optimal


def test_input_validation():
    with pytest.raises(ValueError):
        QPProblem([[1.0, 2.0], [0.0, 1.0]], [0, 0], np.zeros((0, 2)), [])
    with pytest.raises(ValueError):
        QPProblem(np.eye(1), [0.0], [[1.0]], [0.0], lb=[1.0], ub=[0.0])
    with pytest.raises(ValueError):
        QPProblem(np.eye(2), [0.0, 0.0], [[1.0, 0.0]], [0.0, 1.0])


def test_iteration_cap_gives_degenerate():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(8, 4))
    p = QPProblem(np.eye(4), np.zeros(4), A, -np.abs(rng.normal(size=8)) - 1)
    sol = solve(p, max_iter=1)
    assert sol.status in ("degenerate", "optimal")
    if solve(p).iterations > 1:
        assert sol.status == "degenerate"


@given(st.floats(0.01, 100.0), st.integers(0, 10_000))
def test_scaling_invariance(c, seed):
    rng = np.random.default_rng(seed)
    H, f, A, b, lb, ub = random_qp(rng, kind="feasible")
    s1 = solve(QPProblem(H, f, A, b, lb, ub))
    s2 = solve(QPProblem(c * H, c * f, A, b, lb, ub))
    np.testing.assert_allclose(s1.z, s2.z, atol=1e-9, rtol=1e-9)


def test_deterministic():
    rng = np.random.default_rng(9)
    H, f, A, b, lb, ub = random_qp(rng, kind="feasible")
    p = QPProblem(H, f, A, b, lb, ub)
    a, c = solve(p), solve(p)
    np.testing.assert_array_equal(a.z, c.z)
    assert a.active == c.active


def test_kkt_residuals_function():
    p = QPProblem(np.eye(1), [0.0], [[1.0]], [-1.0])
    r = kkt_residuals(p, [1.0], np.array([1.0]))
    assert r["stationarity"] == 0.0 and r["primal"] == 0.0


def test_assemble_standard_mode_pins_u1():
    M = 1650.0
    rows = [ConstraintRow([0.0, -1.0 / M], 0.5, "hocbf")]
    clf = ConstraintRow([0.2, 1e-3], -1.0, "clf", slack=1.0)
    p = assemble_step_qp("standard", rows, clf, [-0.35, -3 * M], [0.35, 3 * M],
                         scale=[1.0, M], pinned={0: 0.0})
    assert p.names == ("u1", "u2", "delta")
    sol = solve(p)
    assert sol.optimal
    u = unscale(p, sol.z)
    assert u[0] == 0.0
    assert rows[0].value(u[:2]) >= -1e-9
    assert clf.value(u[:2], u[2]) >= -1e-9
    assert u[2] >= -1e-9


def test_assemble_integral_names_and_dims():
    p = assemble_step_qp("integral", [ConstraintRow([1.0, 1.0], 1.0, "ihocbf")], None, [-1, -1], [1, 1])
    assert p.names == ("u1", "nu")
    assert p.n == 2
    with pytest.raises(ValueError):
        assemble_step_qp("integral", [ConstraintRow([1.0], 1.0)], None, [-1, -1], [1, 1])
    with pytest.raises(ValueError):
        assemble_step_qp("fancy", [], None, [-1], [1])


def test_slack_keeps_hard_rows_priority():
    # CLF wants u >= 5, barrier caps u <= 1: the slack absorbs the conflict
    rows = [ConstraintRow([-1.0], 1.0, "hocbf")]
    clf = ConstraintRow([1.0], -5.0, "clf", slack=1.0)
    p = assemble_step_qp("transform", rows, clf, [-10.0], [10.0], p_slack=100.0)
    sol = solve(p)
    u, delta = unscale(p, sol.z)
    assert u <= 1.0 + 1e-9
    assert delta > 0.0
