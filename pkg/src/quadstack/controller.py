"""Trajectory node -> joint references -> joint torques, one tick per millisecond."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinematics import N_JOINTS, N_LEGS, IkParams, JointState, RobotModel, _dls_step, _fk, _fk_jac, _ik
from .local_planner import GaitPlan, TrajectoryNode, sample
from .robot_interface.packets import MODE_ONBOARD_PD, MODE_TAGS, MODE_TORQUE, CommandPacket
from .rotations import rpy_to_rows

CONTROL_DT = 1e-3
# the controller solves to a tighter tolerance than the offline default so
# consecutive references do not jitter by the solver tolerance
CONTROL_IK = IkParams(tolerance=1e-7, max_iterations=50)


@dataclass(frozen=True)
class Gains:
    kp: np.ndarray
    kd: np.ndarray

    def __post_init__(self):
        for name in ("kp", "kd"):
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (N_JOINTS,)).copy()
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite and non-negative")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def uniform(cls, kp: float = 3.0, kd: float = 0.05) -> "Gains":
        return cls(np.full(N_JOINTS, kp), np.full(N_JOINTS, kd))


@dataclass(frozen=True)
class JointReference:
    q_ref: np.ndarray
    dq_ref: np.ndarray
    mode: str = "onboard_pd"
    degraded: tuple = ()          # legs whose IK failed and kept the previous reference

    def __post_init__(self):
        if self.mode not in MODE_TAGS:
            raise ValueError(f"unknown control mode {self.mode!r}")


def _to_base(node: TrajectoryNode):
    rot = rpy_to_rows(*node.base.rpy)
    px, py, pz = node.base.position
    out = []
    for fx, fy, fz in node.feet:
        dx, dy, dz = fx - px, fy - py, fz - pz
        out.append((rot[0] * dx + rot[3] * dy + rot[6] * dz,
                    rot[1] * dx + rot[4] * dy + rot[7] * dz,
                    rot[2] * dx + rot[5] * dy + rot[8] * dz))
    return out


def stance_targets(model: RobotModel, node: TrajectoryNode, q, base_actual) -> list:
    """Base-frame foot targets with stance feet re-anchored at their measured positions.

    A stance foot cannot move, so the useful target for it is where the foot
    actually is, seen from the reference base pose.  Driving the joints to
    that target pulls the real base back onto the reference.
    """
    targets = _to_base(node)
    rot_ref = rpy_to_rows(*node.base.rpy)
    rot_act = rpy_to_rows(*base_actual.rpy)
    prx, pry, prz = node.base.position
    pax, pay, paz = base_actual.position
    for leg in range(N_LEGS):
        if not node.contact[leg]:
            continue
        bx, by, bz = _fk(model, leg, *q[3 * leg:3 * leg + 3])
        # measured foot in world, horizontal part kept, reference height used
        wx = pax + rot_act[0] * bx + rot_act[1] * by + rot_act[2] * bz
        wy = pay + rot_act[3] * bx + rot_act[4] * by + rot_act[5] * bz
        wz = node.feet[leg][2]
        dx, dy, dz = wx - prx, wy - pry, wz - prz
        targets[leg] = (rot_ref[0] * dx + rot_ref[3] * dy + rot_ref[6] * dz,
                        rot_ref[1] * dx + rot_ref[4] * dy + rot_ref[7] * dz,
                        rot_ref[2] * dx + rot_ref[5] * dy + rot_ref[8] * dz)
    return targets


def node_to_joint_reference(model: RobotModel, node: TrajectoryNode, state: JointState,
                            params: IkParams | None = None, dt: float = CONTROL_DT,
                            previous: JointReference | None = None, base_actual=None,
                            mode: str = "onboard_pd") -> JointReference:
    """IK per leg from the live joint state; joint velocity from the per-tick foot error.

    ``base_actual`` (a BodyState) enables stance re-anchoring, see
    :func:`stance_targets`.
    """
    p = params or CONTROL_IK
    q = state.q.tolist()
    targets = _to_base(node) if base_actual is None else stance_targets(model, node, q, base_actual)
    q_ref = np.empty(N_JOINTS)
    dq_ref = np.empty(N_JOINTS)
    degraded = []
    for leg in range(N_LEGS):
        s = slice(3 * leg, 3 * leg + 3)
        tx, ty, tz = targets[leg]
        a, h, k, ok, _, _ = _ik(model, leg, tx, ty, tz, *q[s], p.lam, p.tolerance, p.max_iterations,
                                p.mu, p.max_step)
        if ok:
            q_ref[s] = (a, h, k)
        else:
            degraded.append(leg)
            q_ref[s] = previous.q_ref[s] if previous is not None else q[s]
        pos, jac = _fk_jac(model, leg, *q[s])
        ex, ey, ez = (tx - pos[0]) / dt, (ty - pos[1]) / dt, (tz - pos[2]) / dt
        if ok and (ex or ey or ez):
            dq_ref[s] = _dls_step(jac, ex, ey, ez, p.mu)
        else:
            dq_ref[s] = 0.0
    return JointReference(q_ref, dq_ref, mode, tuple(degraded))


@dataclass
class TorqueResult:
    tau: np.ndarray
    clamped: tuple


def pd_torque(gains: Gains, ref: JointReference, state: JointState, limit: float | None = None) -> TorqueResult:
    """``kp (q_ref - q) + kd (dq_ref - dq)``, clamped to +-limit when a limit is given."""
    tau = gains.kp * (ref.q_ref - state.q) + gains.kd * (ref.dq_ref - state.dq)
    if limit is None:
        return TorqueResult(tau, ())
    over = np.abs(tau) > limit
    return TorqueResult(np.clip(tau, -limit, limit), tuple(int(i) for i in np.nonzero(over)[0]))


@dataclass
class Controller:
    """Holds the active plan and emits exactly one command packet per tick.

    ``plan_offset`` maps simulated time onto plan time; the active plan is
    only replaced through :meth:`swap_plan`.
    """

    model: RobotModel
    plan: GaitPlan
    gains: Gains = field(default_factory=Gains.uniform)
    mode: str = "onboard_pd"
    ik: IkParams = CONTROL_IK
    dt: float = CONTROL_DT
    feedback: bool = True
    plan_offset: float = 0.0
    ticks: int = 0
    seq: int = 0
    last_ref: JointReference | None = None
    last_node: TrajectoryNode | None = None
    degraded_ticks: int = 0
    clamped_ticks: int = 0

    def swap_plan(self, plan: GaitPlan, offset: float):
        self.plan = plan
        self.plan_offset = offset

    def plan_time(self, t: float) -> float:
        return t - self.plan_offset

    def reference_node(self, t: float) -> TrajectoryNode:
        tp = self.plan_time(t)
        return sample(self.plan, min(max(tp, 0.0), self.plan.duration))

    def exhausted(self, t: float) -> bool:
        return self.plan_time(t) > self.plan.duration + 1e-9

    def tick(self, t: float, state: JointState, base_actual=None) -> CommandPacket:
        if self.exhausted(t) and self.last_ref is not None:
            # hold: once the plan ran out the last reference is kept
            ref = JointReference(self.last_ref.q_ref, np.zeros(N_JOINTS), self.mode)
            self.last_node = self.reference_node(t)
        else:
            node = self.reference_node(t)
            self.last_node = node
            ref = node_to_joint_reference(self.model, node, state, self.ik, self.dt, self.last_ref,
                                          base_actual if self.feedback else None, self.mode)
            if self.exhausted(t):
                ref = JointReference(ref.q_ref, np.zeros(N_JOINTS), self.mode, ref.degraded)
        if ref.degraded:
            self.degraded_ticks += 1
        self.last_ref = ref
        self.ticks += 1
        self.seq += 1
        return self.packet(ref, state)

    def packet(self, ref: JointReference, state: JointState) -> CommandPacket:
        if self.mode == "torque":
            res = pd_torque(self.gains, ref, state, self.model.torque_limit)
            if res.clamped:
                self.clamped_ticks += 1
            return CommandPacket(MODE_TORQUE, self.seq, tau=res.tau)
        return CommandPacket(MODE_ONBOARD_PD, self.seq, ref.q_ref, ref.dq_ref, self.gains.kp, self.gains.kd)


def hold_reference(q) -> JointReference:
    return JointReference(np.asarray(q, dtype=float).copy(), np.zeros(N_JOINTS))

