"""Integration loop, scenario files, log export and audits."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from mrdeadlock import (
    GoalSpec,
    Params,
    RobotState,
    Scenario,
    WorldState,
    audit_log,
    default_head_on_scenario,
    export_log,
    integrate_step,
    load_log,
    load_scenario,
    run_scenario,
    save_scenario,
)
from mrdeadlock.cbf import pair_indices
from mrdeadlock.errors import SimulationAbort
from mrdeadlock.sim import _Recorder, log_to_json, scenario_from_dict, scenario_to_dict


def test_integrate_step_equilibrium():
    world = WorldState(robots=(RobotState.at_rest((1.0, 2.0)),), t=0.0)
    nxt = integrate_step(world, ((0.0, 0.0),), 0.1)
    assert nxt.robots[0].p == (1.0, 2.0)
    assert nxt.robots[0].v == (0.0, 0.0)
    assert nxt.t == pytest.approx(0.1)


def test_integrate_step_one_step_arithmetic():
    world = WorldState(robots=(RobotState(p=(0.0, 0.0), v=(0.0, 0.0)),), t=0.0)
    nxt = integrate_step(world, ((1.0, 0.0),), 0.1)
    assert nxt.robots[0].v == pytest.approx((0.1, 0.0))
    assert nxt.robots[0].p == pytest.approx((0.01, 0.0))


def test_integrate_step_first_order_convergence():
    # constant acceleration: error vs the exact parabola shrinks like O(dt)
    u = (0.7, -0.3)
    t_final = 1.0
    errors = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        world = WorldState(robots=(RobotState(p=(0.0, 0.0), v=(0.2, 0.1)),), t=0.0)
        for _ in range(int(round(t_final / dt))):
            world = integrate_step(world, (u,), dt)
        exact = (0.2 * t_final + 0.5 * u[0], 0.1 * t_final + 0.5 * u[1])
        errors.append(math.dist(world.robots[0].p, exact))
    assert errors[0] > errors[1] > errors[2]
    assert errors[0] / errors[2] == pytest.approx(4.0, rel=0.2)


def test_run_is_deterministic_byte_identical_json():
    scen = default_head_on_scenario(t_max=1.0)
    j1 = log_to_json(run_scenario(scen))
    j2 = log_to_json(run_scenario(scen))
    assert j1 == j2


def test_single_robot_pd_only_monotone_convergence():
    params = Params(kp=1.0, kv=3.0, ds=0.5, alpha=(5.0,))
    scen = Scenario(
        params=params,
        initial=(RobotState.at_rest((0.0, 0.0)),),
        goals=GoalSpec(pd=((1.5, -0.5),)),
        controller="pd-only",
        t_max=35.0,
        stop_goal_tol=1e-4,
    )
    log = run_scenario(scen)
    assert [e["name"] for e in log.events] == ["goals-reached"]
    err = np.hypot(log.pos[:, 0, 0] - 1.5, log.pos[:, 0, 1] + 0.5)
    assert np.all(np.diff(err) <= 1e-15)  # overdamped from rest: monotone decay
    # cross-check against the closed-form overdamped kernel at a few times
    w1 = 0.5 * (-3.0 + math.sqrt(5.0))
    w2 = 0.5 * (-3.0 - math.sqrt(5.0))
    for k in (100, 1000, 5000):
        t = log.t[k]
        kernel = (w1 * math.exp(w2 * t) - w2 * math.exp(w1 * t)) / (w1 - w2)
        assert err[k] == pytest.approx(err[0] * kernel, rel=2e-3)


def test_csv_export_shape_and_columns(tmp_path):
    from mrdeadlock import three_robot_cat_a_scenario

    scen = three_robot_cat_a_scenario(controller="cbf-qp-only", t_max=0.1)
    log = run_scenario(scen)
    assert log.n_records == 101
    path = tmp_path / "log.csv"
    export_log(log, "csv", str(path))
    lines = path.read_text().strip().split("\n")
    header = lines[0].split(",")
    assert header[:11] == [
        "t", "robot_id", "px", "py", "vx", "vy",
        "ux_star", "uy_star", "ux_hat", "uy_hat", "phase",
    ]
    assert header[11:] == ["h_0_1", "h_0_2", "h_1_2", "mu_0_1", "mu_0_2", "mu_1_2"]
    assert len(lines) - 1 == 101 * 3  # one row per record per robot


def test_csv_export_empty_log_header_only(tmp_path):
    rec = _Recorder(2, 4)
    log = rec.build([], {"scenario": scenario_to_dict(default_head_on_scenario())})
    path = tmp_path / "empty.csv"
    export_log(log, "csv", str(path))
    lines = path.read_text().strip().split("\n")
    assert len(lines) == 1 and lines[0].startswith("t,robot_id,")


def test_json_round_trip(tmp_path):
    scen = default_head_on_scenario(t_max=0.5)
    log = run_scenario(scen)
    path = tmp_path / "log.json"
    export_log(log, "json", str(path))
    back = load_log(str(path))
    assert np.array_equal(back.t, log.t)
    assert np.array_equal(back.pos, log.pos)
    assert np.array_equal(back.mu, log.mu)
    assert back.events == log.events
    assert back.meta == log.meta
    assert log_to_json(back) == log_to_json(log)


def test_audit_recomputation_agrees_and_detects_tampering():
    scen = default_head_on_scenario(t_max=1.0)
    log = run_scenario(scen)
    report = audit_log(log, kkt_stride=50)
    assert report.ok
    assert report.h_match_max <= 1e-12
    assert report.kkt_max_residual is not None and report.kkt_max_residual <= 1e-8
    log.h[5, 0] += 1e-6
    assert not audit_log(log, kkt_stride=50, check_kkt=False).ok


def test_pd_only_head_on_aborts_on_safety_violation():
    scen = default_head_on_scenario(controller="pd-only", t_max=10.0)
    with pytest.raises(SimulationAbort) as err:
        run_scenario(scen)
    assert err.value.kind == "safety-violation"


def test_infeasible_qp_aborts_with_diagnostic():
    params = Params(kp=1.0, kv=3.0, ds=0.5, alpha=(5.0, 5.0))
    scen = Scenario(
        params=params,
        initial=(
            RobotState(p=(0.0, 0.0), v=(1.5, 0.0)),
            RobotState(p=(0.51, 0.0), v=(-1.5, 0.0)),
        ),
        goals=GoalSpec(pd=((2.0, 0.0), (-2.0, 0.0))),
        controller="cbf-qp-only",
        t_max=1.0,
    )
    with pytest.raises(SimulationAbort) as err:
        run_scenario(scen)
    assert err.value.kind == "qp-infeasible"
    assert "t" in err.value.snapshot


def test_scenario_yaml_round_trip(tmp_path):
    scen = default_head_on_scenario(controller="three-phase", t_max=12.0)
    path = tmp_path / "scenario.yaml"
    save_scenario(scen, str(path))
    back = load_scenario(str(path))
    assert back == scen


def test_scenario_dict_round_trip_defaults():
    scen = default_head_on_scenario()
    assert scenario_from_dict(scenario_to_dict(scen)) == scen


def test_scenario_validation():
    params = Params(kp=1.0, kv=3.0, ds=0.5, alpha=(5.0, 5.0))
    with pytest.raises(ValueError):
        Scenario(
            params=params,
            initial=(RobotState.at_rest((0.0, 0.0)), RobotState.at_rest((0.1, 0.0))),
            goals=GoalSpec(pd=((2.0, 0.0), (-2.0, 0.0))),
        )
    with pytest.raises(ValueError):
        default_head_on_scenario(controller="nonsense")
    with pytest.raises(ValueError):
        default_head_on_scenario(dt=-1.0)
    with pytest.raises(ValueError):
        Scenario(
            params=params,
            initial=(RobotState.at_rest((0.0, 0.0)),),
            goals=GoalSpec(pd=((2.0, 0.0), (-2.0, 0.0))),
        )


def test_three_phase_requires_overdamped_gains():
    params = Params(kp=1.0, kv=2.0, ds=0.5, alpha=(5.0, 5.0))  # kv^2 = 4 kp
    with pytest.raises(ValueError):
        Scenario(
            params=params,
            initial=(RobotState.at_rest((-2.0, 0.0)), RobotState.at_rest((2.0, 0.0))),
            goals=GoalSpec(pd=((2.0, 0.0), (-2.0, 0.0))),
            controller="three-phase",
        )


def test_export_log_error_paths(tmp_path):
    scen = default_head_on_scenario(t_max=0.05)
    log = run_scenario(scen)
    with pytest.raises(ValueError):
        export_log(log, "parquet", str(tmp_path / "x"))
    with pytest.raises(OSError) as err:
        export_log(log, "csv", str(tmp_path / "no-such-dir" / "x.csv"))
    assert "no-such-dir" in str(err.value)


def test_goal_stop_event_and_time_bound():
    params = Params(kp=1.0, kv=3.0, ds=0.5, alpha=(5.0,))
    scen = Scenario(
        params=params,
        initial=(RobotState.at_rest((0.0, 0.0)),),
        goals=GoalSpec(pd=((0.2, 0.0),)),
        controller="pd-only",
        t_max=60.0,
        stop_goal_tol=1e-3,
    )
    log = run_scenario(scen)
    assert log.events[-1]["name"] == "goals-reached"
    assert log.t[-1] < 60.0
    assert math.dist(tuple(log.pos[-1, 0]), (0.2, 0.0)) <= 1e-3


def test_log_every_decimation():
    scen = default_head_on_scenario(t_max=0.1, log_every=10)
    log = run_scenario(scen)
    assert log.n_records == 11
    assert np.allclose(np.diff(log.t), 0.01)


def test_records_strictly_increasing_in_time():
    scen = default_head_on_scenario(t_max=0.25)
    log = run_scenario(scen)
    assert np.all(np.diff(log.t) > 0)
    assert len(pair_indices(2)) == log.h.shape[1]
