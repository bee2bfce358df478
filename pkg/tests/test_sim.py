import io
import math

import numpy as np
import pytest

from mcbf.dynamics import make_unicycle, step_integrate, UnicycleParams
from mcbf.scenarios import SCENARIOS, get_scenario, random_scenario
from mcbf.sim import (CSV_COLUMNS, TERMINAL, ConfigError, Controller, ScenarioConfig, TrajectoryLog,
                      interleaved_step_times, run, safety_metrics)

SHORT = ScenarioConfig(t_f=3.0)


@pytest.fixture(scope="module")
def short_logs():
    return {m: run(SHORT.with_overrides(mode=m)) for m in ("standard", "integral", "transform")}


def test_run_is_deterministic():
    cfg = SHORT.with_overrides(mode="transform", t_f=1.5)
    a, b = run(cfg), run(cfg)
    buf_a, buf_b = io.StringIO(), io.StringIO()
    a.write_csv(buf_a)
    b.write_csv(buf_b)
    assert buf_a.getvalue() == buf_b.getvalue()


def test_timestamps_and_length(short_logs):
    for log in short_logs.values():
        t = log.times()
        np.testing.assert_allclose(np.diff(t), SHORT.dt, atol=1e-12)
        assert t[0] == 0.0
        assert len(log.records) == 30
        assert log.final_t == pytest.approx(3.0)


def test_zero_order_hold(short_logs):
    """Replaying the logged controls through the integrator reproduces the states."""
    for mode in ("standard", "transform"):
        log = short_logs[mode]
        sys_ = make_unicycle(UnicycleParams(SHORT.M), SHORT.control_bounds())
        x = np.array(SHORT.x0)
        for rec in log.records:
            np.testing.assert_array_equal(rec.state, x)
            x = step_integrate(sys_, x, rec.u, SHORT.dt, "rk4")
        np.testing.assert_array_equal(log.final_state, x)


def test_integral_mode_integrates_u2(short_logs):
    log = short_logs["integral"]
    recs = log.records
    for a, b in zip(recs, recs[1:]):
        assert b.u[1] == pytest.approx(a.u[1] + SHORT.dt * a.nu, abs=1e-6 * SHORT.M)


def test_hard_rows_hold_at_solution(short_logs):
    for log in short_logs.values():
        for rec in log.records:
            assert rec.status == "optimal"
            assert rec.delta >= -1e-9
            assert max(rec.kkt.values()) <= 1e-7
            decision = rec.u if log.mode != "integral" else np.array([rec.u[0], rec.nu])
            for row in rec.rows:
                assert row.value(decision) >= -1e-7 * max(1.0, np.abs(row.a_u).max() * SHORT.M)


def test_standard_mode_never_steers(short_logs):
    log = short_logs["standard"]
    assert all(r.main_row[0] == 0.0 for r in log.records)
    assert np.all(log.controls()[:, 0] == 0.0)


def test_state_limits(short_logs):
    for log in short_logs.values():
        m = safety_metrics(log)
        assert m["max_bound_violation"]["v"] <= 1e-6
        assert m["max_bound_violation"]["phi"] <= 1e-6
        assert m["max_bound_violation"]["u1"] == 0.0
        assert m["max_bound_violation"]["u2"] == 0.0


def test_metrics_on_stationary_log():
    cfg = ScenarioConfig(mode="transform")
    x0 = np.array(cfg.x0)
    log = TrajectoryLog("transform", cfg, final_state=x0, final_t=0.0)
    m = safety_metrics(log)
    assert m["steps"] == 0
    assert m["final_distance"] == pytest.approx(60.0)
    assert m["min_center_clearance"] == pytest.approx(math.hypot(29.5, 1.0) - 6.0)
    assert m["objective"] == pytest.approx(60.0)
    assert m["safe"] and not m["goal_reached"]


def test_csv_round_trip_exact(short_logs):
    log = short_logs["integral"]
    buf = io.StringIO()
    log.write_csv(buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    assert text.splitlines()[-1].endswith(TERMINAL)
    back = TrajectoryLog.read_csv(io.StringIO(text), log.config)
    np.testing.assert_array_equal(back.states(), log.states())
    np.testing.assert_array_equal(back.controls(), log.controls())
    assert back.final_t == log.final_t
    assert [r.nu for r in back.records] == [r.nu for r in log.records]


def test_json_round_trip_exact(short_logs, tmp_path):
    log = short_logs["transform"]
    log.to_json(tmp_path / "t.json")
    back = TrajectoryLog.from_json(tmp_path / "t.json", log.config)
    np.testing.assert_array_equal(back.states(), log.states())
    assert all(math.isnan(r.nu) for r in back.records)


def test_read_csv_rejects_wrong_header():
    with pytest.raises(ValueError):
        TrajectoryLog.read_csv(io.StringIO("a,b\n1,2\n"), ScenarioConfig())


@pytest.mark.parametrize("field,value", [
    ("dt", -0.1), ("dt", 0.0), ("t_f", 0.0), ("M", float("nan")), ("mode", "bogus"),
    ("integrator", "rk45"), ("probes", 0), ("v_min", 6.0), ("u2_min", 1.0), ("r", -1.0),
    ("d", -0.5), ("k_bound", 20.0), ("k_alpha", (1.0, -1.0)),
])
def test_validation_names_field(field, value):
    with pytest.raises(ConfigError) as exc:
        ScenarioConfig().with_overrides(**{field: value}).validate()
    assert exc.value.field in (field, "x0")


def test_validation_rejects_bad_start():
    with pytest.raises(ConfigError, match="x0"):
        ScenarioConfig(x0=(35.0, 14.0, 0.0, 0.0, 0.0)).validate()
    with pytest.raises(ConfigError, match="x0"):
        ScenarioConfig(x0=(5.0, 15.0, 7.0, 0.0, 0.0)).validate()
    with pytest.raises(ConfigError, match="x0"):
        ScenarioConfig(x0=(5.0, 15.0, 0.0)).validate()


def test_k_alpha_too_short():
    with pytest.raises(ConfigError, match="k_alpha"):
        Controller(ScenarioConfig(mode="integral", k_alpha=(1.0,)))


def test_scenario_registry():
    assert get_scenario("paper_sec4") is SCENARIOS["paper_sec4"]
    with pytest.raises(ConfigError):
        get_scenario("nope")


def test_random_scenario_is_admissible():
    rng = np.random.default_rng(0)
    for mode in ("integral", "transform"):
        cfg, ctl = random_scenario(rng, mode, t_f=1.0)
        assert cfg.mode == mode and ctl.mode == mode
        log = run(cfg, ctl)
        assert len(log.records) == 10


def test_interleaved_timing(short_logs):
    pairs = {m: (Controller(SHORT.with_overrides(mode=m)), short_logs[m]) for m in ("integral", "transform")}
    times = interleaved_step_times(pairs, passes=1)
    assert set(times) == {"integral", "transform"}
    assert all(0 < t < 1 for t in times.values())


def test_infeasible_steps_hold_previous_control():
    # starting at top speed, a tiny nu box cannot brake in time for the v limit
    cfg = ScenarioConfig(mode="integral", t_f=3.0, x0=(5.0, 15.0, 5.0, 0.0, 0.0), nu_box_factor=1e-3)
    log = run(cfg)
    bad = [i for i, r in enumerate(log.records) if r.status != "optimal"]
    assert bad
    for i in bad:
        r, prev = log.records[i], log.records[i - 1]
        assert math.isnan(r.delta) and r.nu == 0.0
        assert r.u[0] == prev.u[0]
        assert r.u[1] == pytest.approx(prev.u[1] + cfg.dt * prev.nu)
    assert safety_metrics(log)["infeasible_steps"] == len(bad)
