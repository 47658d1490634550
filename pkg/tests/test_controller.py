import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadstack.controller import Controller, Gains, JointReference, hold_reference, node_to_joint_reference, pd_torque
from quadstack.kinematics import JointState, RobotModel, forward_kinematics, leg_jacobian, nominal_joint_angles
from quadstack.local_planner import BodyState, TrajectoryNode, body_state_at, plan_gait
from quadstack.robot_interface import MODE_ONBOARD_PD, MODE_TORQUE, CommandPacket
from quadstack.simulator import Plant, SimConfig, standing_state
from quadstack.terrain import HeightMap

MODEL = RobotModel()
Q0 = nominal_joint_angles(MODEL)
HMAP = HeightMap(np.zeros((41, 41)), 0.05, (-1.0, -1.0))


def node_from_q(q, shift=(0.0, 0.0, 0.0)):
    base = BodyState((0.0, 0.0, MODEL.standing_height))
    feet = forward_kinematics(MODEL, q) + base.position + np.array(shift)
    return TrajectoryNode(0.0, base, feet, (True,) * 4)


def test_fixed_point():
    ref = node_to_joint_reference(MODEL, node_from_q(Q0), JointState(Q0))
    assert np.allclose(ref.q_ref, Q0, atol=1e-9)
    assert np.allclose(ref.dq_ref, 0.0, atol=1e-5)
    assert ref.degraded == ()


def test_one_millimetre_displacement_velocity():
    ref = node_to_joint_reference(MODEL, node_from_q(Q0, (1e-3, 0.0, 0.0)), JointState(Q0), dt=1e-3)
    for leg in range(4):
        jac = leg_jacobian(MODEL, leg, Q0[3 * leg:3 * leg + 3])
        v = jac @ ref.dq_ref[3 * leg:3 * leg + 3]
        assert np.linalg.norm(v - np.array([1.0, 0.0, 0.0])) < 1e-4


def test_unreachable_node_holds_previous():
    previous = hold_reference(Q0 + 0.01)
    node = node_from_q(Q0)
    feet = node.feet.copy()
    feet[1] += (3.0, 0.0, 0.0)
    bad = TrajectoryNode(0.0, node.base, feet, node.contact)
    ref = node_to_joint_reference(MODEL, bad, JointState(Q0), previous=previous)
    assert ref.degraded == (1,)
    assert np.array_equal(ref.q_ref[3:6], previous.q_ref[3:6])
    assert np.allclose(ref.q_ref[:3], Q0[:3], atol=1e-9)


def test_pd_examples():
    z = np.zeros(12)
    g = Gains.uniform(10.0, 0.5)
    assert np.array_equal(pd_torque(g, JointReference(z, z), JointState(z, z)).tau, z)
    ref = JointReference(np.full(12, 0.1), z)
    assert pd_torque(g, ref, JointState(z, z)).tau == pytest.approx(np.ones(12))
    ref = JointReference(z, np.full(12, -0.2))
    assert pd_torque(g, ref, JointState(z, z)).tau == pytest.approx(np.full(12, -0.1))


def test_gains_validation():
    with pytest.raises(ValueError):
        Gains.uniform(-1.0)
    assert Gains(3.0, 0.05).kp.shape == (12,)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=12, max_size=12), st.lists(st.floats(-1, 1), min_size=12, max_size=12),
       st.floats(-0.5, 0.5))
def test_pd_linear_and_clamped(e, ed, alpha):
    g = Gains.uniform()
    z = np.zeros(12)
    e, ed = np.array(e), np.array(ed)
    base = pd_torque(g, JointReference(e, ed), JointState(z, z)).tau
    scaled = pd_torque(g, JointReference(alpha * e, alpha * ed), JointState(z, z)).tau
    assert np.allclose(scaled, alpha * base, atol=1e-12)
    big = pd_torque(g, JointReference(10 * e, 10 * ed), JointState(z, z), MODEL.torque_limit)
    assert np.all(np.abs(big.tau) <= MODEL.torque_limit)
    assert set(big.clamped) == set(np.nonzero(np.abs(10 * base) > MODEL.torque_limit)[0].tolist())


def standing_plan():
    s = body_state_at(HMAP, MODEL, 0.0, 0.0, 0.0)
    return plan_gait(s, s, HMAP, model=MODEL), standing_state(HMAP, MODEL, 0.0, 0.0, 0.0)


def test_two_second_plan_gives_two_thousand_packets():
    plan, init = standing_plan()
    assert plan.duration == pytest.approx(2.0)
    ctrl = Controller(MODEL, plan)
    seqs = [ctrl.tick(k * 1e-3, init.joints).seq for k in range(2000)]
    assert ctrl.ticks == 2000 and seqs == list(range(1, 2001))


def test_torque_mode_carries_pd_output():
    plan, init = standing_plan()
    ctrl = Controller(MODEL, plan, mode="torque")
    state = JointState(init.joints.q + 0.05, np.full(12, 0.1))
    pkt = ctrl.tick(0.3, state)
    assert pkt.mode == MODE_TORQUE
    expected = pd_torque(ctrl.gains, ctrl.last_ref, state, MODEL.torque_limit).tau
    assert np.array_equal(pkt.tau, expected.astype(np.float32))


def test_hold_after_plan_end():
    plan, init = standing_plan()
    ctrl = Controller(MODEL, plan)
    for k in range(2000):
        ctrl.tick(k * 1e-3, init.joints)
    last = ctrl.tick(2.0, init.joints)
    final = ctrl.last_ref.q_ref.copy()
    for k in range(1, 50):
        pkt = ctrl.tick(2.0 + k * 1e-3, JointState(init.joints.q + 0.01))
        assert pkt.mode == MODE_ONBOARD_PD
        assert np.array_equal(pkt.q_ref, final.astype(np.float32))
        assert not pkt.dq_ref.any()
    assert np.array_equal(last.q_ref, pkt.q_ref)


def test_tick_deterministic():
    plan, init = standing_plan()
    a, b = Controller(MODEL, plan), Controller(MODEL, plan)
    for k in range(0, 2000, 37):
        assert a.tick(k * 1e-3, init.joints, init.base) == b.tick(k * 1e-3, init.joints, init.base)


def test_closed_loop_step_response():
    init = standing_state(HMAP, MODEL, 0.0, 0.0, 0.0)
    plant = Plant(init, SimConfig(), HMAP, MODEL)
    g = Gains.uniform()
    target = init.joints.q.copy()
    target[1] += 0.1
    pkt = CommandPacket(MODE_ONBOARD_PD, 1, target, np.zeros(12), g.kp, g.kd)
    for _ in range(500):
        plant.step(pkt)
    assert abs(plant.q[1] - np.float32(target[1])) < 1e-3
