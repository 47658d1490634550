"""Look-ahead segment goals, plan stitching and the replan trigger."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..kinematics import RobotModel
from ..local_planner import BodyState, GaitPlan, base_height, sample
from ..rotations import wrap_angle
from ..terrain import HeightMap
from .spline import GlobalPath

STITCH_TOLERANCE = 1e-6
DEFAULT_STEP_SIZE = 0.3
DEFAULT_REPLAN_THRESHOLD = 0.1


class StitchError(ValueError):
    def __init__(self, discrepancy: float):
        super().__init__(f"seam mismatch of {discrepancy:.6g} m exceeds {STITCH_TOLERANCE:g} m")
        self.discrepancy = discrepancy


class StitchPreconditionError(ValueError):
    pass


@dataclass
class StitchSchedule:
    step_size: float = DEFAULT_STEP_SIZE
    segment_id: int = 0
    queue: list = field(default_factory=list)

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step size must be positive")


def goal_on_path(path: GlobalPath, s: float, hmap: HeightMap, model: RobotModel | None = None) -> BodyState:
    model = model or RobotModel()
    s = min(max(s, 0.0), path.length)
    x, y = path.point(s)
    yaw = path.heading(s)
    return BodyState((x, y, base_height(hmap, model, x, y, yaw)), (0.0, 0.0, yaw))


def next_segment_goal(path: GlobalPath, current: BodyState, schedule: StitchSchedule, hmap: HeightMap,
                      model: RobotModel | None = None, s_current: float | None = None):
    """(start, goal) for the next local solve: goal lies ``step_size`` further along the path."""
    if s_current is None:
        s_current = path.project(*current.xy)
    goal = goal_on_path(path, s_current + schedule.step_size, hmap, model)
    return current, goal


def seam_discrepancy(current: GaitPlan, i: int, nxt: GaitPlan) -> float:
    dp = np.abs(current.base_pos[i] - nxt.base_pos[0]).max()
    dyaw = abs(wrap_angle(current.base_rpy[i, 2] - nxt.base_rpy[0, 2]))
    dfeet = np.abs(current.feet[i] - nxt.feet[0]).max()
    return float(max(dp, dyaw, dfeet))


def stitch(current: GaitPlan, nxt: GaitPlan, at: float) -> GaitPlan:
    """``current`` up to ``at`` followed by ``nxt`` shifted to start at ``at``."""
    i = current.index_of(at)
    if i is None or not current.contact[i].all():
        raise StitchPreconditionError(f"t = {at} is not a full-contact node of the current plan")
    if not nxt.contact[0].all():
        raise StitchPreconditionError("the next plan does not start in full contact")
    gap = seam_discrepancy(current, i, nxt)
    if gap > STITCH_TOLERANCE:
        raise StitchError(gap)
    at = float(current.t[i])
    cat = lambda a, b: np.concatenate([a[:i], b])  # noqa: E731
    return GaitPlan(
        cat(current.t, nxt.t + at), cat(current.base_pos, nxt.base_pos), cat(current.base_rpy, nxt.base_rpy),
        cat(current.base_vel, nxt.base_vel), cat(current.base_omega, nxt.base_omega),
        cat(current.feet, nxt.feet), cat(current.contact, nxt.contact), current.dt,
        current.terrain, current.pattern,
        tuple(s for s in current.seams if s < at) + (at,) + tuple(s + at for s in nxt.seams))


def trim(plan: GaitPlan, at: float) -> GaitPlan:
    """The part of ``plan`` from the full-contact node ``at`` onward, re-rooted at t = 0."""
    i = plan.index_of(at)
    if i is None or not plan.contact[i].all():
        raise StitchPreconditionError(f"t = {at} is not a full-contact node")
    t0 = float(plan.t[i])
    return GaitPlan(plan.t[i:] - t0, plan.base_pos[i:], plan.base_rpy[i:], plan.base_vel[i:],
                    plan.base_omega[i:], plan.feet[i:], plan.contact[i:], plan.dt, plan.terrain,
                    plan.pattern, tuple(s - t0 for s in plan.seams if s > t0))


@dataclass(frozen=True)
class ReplanDecision:
    replan: bool
    deviation: float
    start: BodyState | None = None
    goal: BodyState | None = None


def replan_trigger(current: BodyState, plan: GaitPlan, t: float,
                   threshold: float = DEFAULT_REPLAN_THRESHOLD, goal: BodyState | None = None) -> ReplanDecision:
    """Replan when the base strays more than ``threshold`` from the reference at time ``t``."""
    t = min(max(t, 0.0), plan.duration)
    ref = sample(plan, t).base
    deviation = math.dist(current.position, ref.position)
    if deviation <= threshold:
        return ReplanDecision(False, deviation)
    start = BodyState(current.position, current.rpy)
    if goal is None:
        goal = plan.node(len(plan) - 1).base
    return ReplanDecision(True, deviation, start, goal)
