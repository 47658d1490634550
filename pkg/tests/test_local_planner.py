import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadstack.kinematics import RobotModel
from quadstack.local_planner import (BodyState, GaitPattern, GaitPlan, PlannerConfig, PlanningError,
                                     body_state_at, check_feasibility, check_node_invariants,
                                     full_contact_nodes, plan_from_csv, plan_gait, plan_to_csv, sample)
from quadstack.terrain import HeightMap, flat_map, generate_task_env, height_at

MODEL = RobotModel()
FLAT = flat_map(4.0, 4.0, 0.05)


def state(x, y, yaw=0.0, terrain=FLAT):
    return body_state_at(terrain, MODEL, x, y, yaw)


def full_contact_runs(plan):
    """Maximal runs of all-stance nodes as (t_first, t_last)."""
    full = plan.contact.all(axis=1)
    runs, i = [], 0
    while i < len(full):
        if full[i]:
            j = i
            while j + 1 < len(full) and full[j + 1]:
                j += 1
            runs.append((plan.t[i], plan.t[j]))
            i = j + 1
        else:
            i += 1
    return runs


def test_body_state_validation():
    with pytest.raises(ValueError):
        BodyState((0, 0, float("nan")))
    with pytest.raises(ValueError):
        BodyState((0, 0))


def test_pattern_validation():
    with pytest.raises(ValueError):
        GaitPattern(duty_factor=0.0)
    with pytest.raises(ValueError):
        GaitPattern(full_stance_fraction=0.7)
    with pytest.raises(ValueError):
        GaitPattern(phase_offsets=(0.1, 0.55, 0.55, 0.15))
    p = GaitPattern()
    assert p.duty_factor + p.swing_fraction == 1.0


def test_null_displacement():
    s = state(2, 2)
    plan = plan_gait(s, s, FLAT)
    assert plan.duration == GaitPattern().cycle_duration
    assert plan.contact.all()
    assert np.ptp(plan.base_pos, axis=0).max() == 0.0
    assert full_contact_nodes(plan) == plan.t.tolist()
    assert check_feasibility(plan, MODEL, FLAT)


def test_flat_goal_reached_and_invariants():
    s, g = state(1, 2), state(1.5, 2)
    plan = plan_gait(s, g, FLAT)
    assert np.allclose(plan.base_pos[-1], g.position, atol=1e-6)
    assert plan.duration == 2 * GaitPattern().cycle_duration       # 0.5 m at 0.3 m per cycle
    assert check_node_invariants(plan, FLAT) == []
    assert plan.contact[0].all() and plan.contact[-1].all()
    assert np.allclose(np.diff(plan.t), plan.dt)
    # the first node is the start state itself
    assert tuple(plan.base_pos[0]) == s.position


def test_out_of_bounds_start():
    with pytest.raises(PlanningError):
        plan_gait(BodyState((10, 10, 0.3)), state(2, 2), FLAT)


def test_climbing_touchdowns_on_terrain():
    hmap = generate_task_env("climbing", 3)
    s = body_state_at(hmap, MODEL, 0.8, 1.5, 0.0)
    g = body_state_at(hmap, MODEL, 2.2, 1.5, 0.0)
    plan = plan_gait(s, g, hmap, model=MODEL)
    for leg in range(4):
        col = plan.contact[:, leg]
        touchdowns = np.nonzero(col[1:] & ~col[:-1])[0] + 1
        assert len(touchdowns) > 0
        for i in touchdowns:
            x, y, z = plan.feet[i, leg]
            assert z == pytest.approx(height_at(hmap, x, y), abs=1e-12)
    assert check_node_invariants(plan, hmap) == []
    assert check_feasibility(plan, MODEL, hmap)


def test_wall_is_step_infeasible():
    h = np.zeros((60, 60))
    h[:, 30:32] = 1.0
    wall = HeightMap(h, 0.05)
    s = body_state_at(wall, MODEL, 1.2, 1.5, 0.0)
    g = body_state_at(wall, MODEL, 1.9, 1.5, 0.0)
    verdict = check_feasibility(plan_gait(s, g, wall), MODEL, wall)
    assert not verdict
    assert "step height exceeded" in verdict.reasons


def test_inflated_stride_exceeds_reach():
    cfg = PlannerConfig(max_stride=3.0)
    plan = plan_gait(state(1, 2), state(2.5, 2), FLAT, config=cfg)
    verdict = check_feasibility(plan, MODEL, FLAT, cfg)
    assert "reach exceeded" in verdict.reasons


def test_sample_examples():
    plan = plan_gait(state(1, 2), state(1.3, 2), FLAT)
    node = sample(plan, plan.t[37])
    assert np.array_equal(node.feet, plan.feet[37])
    assert node.base.position == tuple(plan.base_pos[37])
    with pytest.raises(PlanningError):
        sample(plan, -0.01)
    with pytest.raises(PlanningError):
        sample(plan, plan.duration + 0.1)
    # hand-built two-node plan: foot z 0 then 0.04
    t = np.array([0.0, 0.01])
    feet = np.zeros((2, 4, 3))
    feet[1, 0, 2] = 0.04
    two = GaitPlan(t, np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((2, 3)), feet,
                   np.array([[True, False, True, True]] * 2), 0.01)
    mid = sample(two, 0.005)
    assert mid.feet[0, 2] == pytest.approx(0.02)
    assert mid.contact == (True, False, True, True)


def test_full_contact_ends_and_interval():
    plan = plan_gait(state(1, 2), state(1.6, 2), FLAT)
    fc = full_contact_nodes(plan)
    assert fc[0] == 0.0 and fc[-1] == plan.duration
    pattern = GaitPattern(phase_offsets=(0.2, 0.6, 0.6, 0.2), full_stance_fraction=0.2)
    plan = plan_gait(state(1, 2), state(1.6, 2), FLAT, pattern)
    cycles = int(round(plan.duration / pattern.cycle_duration))
    for c in range(cycles):
        lo, hi = c * pattern.cycle_duration, (c + 1) * pattern.cycle_duration
        longest = max(min(b, hi) - max(a, lo) for a, b in full_contact_runs(plan))
        assert longest >= 0.4 - 1e-9


def test_deterministic():
    a = plan_gait(state(1, 2), state(1.7, 2.3, 0.4), FLAT)
    b = plan_gait(state(1, 2), state(1.7, 2.3, 0.4), FLAT)
    assert plan_to_csv(a) == plan_to_csv(b)


def test_csv_round_trip():
    plan = plan_gait(state(1, 2), state(1.4, 2.2, 0.3), FLAT)
    text = plan_to_csv(plan)
    header = text.splitlines()[0].split(",")
    assert len(header) == 1 + 7 + 6 + 12 + 4
    again = plan_from_csv(text, FLAT)
    assert np.array_equal(again.t, plan.t)
    assert np.array_equal(again.feet, plan.feet)
    assert np.array_equal(again.contact, plan.contact)
    assert np.allclose(again.base_rpy, plan.base_rpy, atol=1e-12)


def test_one_cycle_solve_time():
    hmap = flat_map(2.5, 2.5, 0.05)          # 51 x 51 cells
    s = body_state_at(hmap, MODEL, 1.0, 1.25, 0.0)
    g = body_state_at(hmap, MODEL, 1.3, 1.25, 0.0)
    plan_gait(s, g, hmap)
    t0 = time.perf_counter()
    plan = plan_gait(s, g, hmap)
    check_feasibility(plan, MODEL, hmap)
    assert time.perf_counter() - t0 <= 0.5


def test_flat_goals_within_one_meter_feasible():
    rng = np.random.default_rng(11)
    for _ in range(100):
        r, ang, yaw = rng.uniform(0, 1.0), rng.uniform(-math.pi, math.pi), rng.uniform(-math.pi, math.pi)
        s = state(2.0, 2.0, yaw)
        g = state(2.0 + r * math.cos(ang), 2.0 + r * math.sin(ang), yaw)
        plan = plan_gait(s, g, FLAT)
        verdict = check_feasibility(plan, MODEL, FLAT)
        assert verdict, (r, ang, yaw, verdict.reasons)
        assert check_node_invariants(plan, FLAT) == []


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.8, 0.8), st.floats(-0.8, 0.8), st.floats(-1.5, 1.5))
def test_invariants_hold_for_any_flat_goal(dx, dy, dyaw):
    plan = plan_gait(state(2, 2), state(2 + dx, 2 + dy, dyaw), FLAT)
    assert check_node_invariants(plan, FLAT) == []
    assert plan.contact[0].all() and plan.contact[-1].all()
