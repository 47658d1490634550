"""Phase-based gait generation between two body states.

The generator is deterministic: the base follows a cubic time-scaled blend
from start to goal, feet touch down at hip projections of the base pose at
mid-stance and swing along a lift / traverse / lower profile that clears
the terrain under the swing segment.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .kinematics import N_LEGS, RobotModel
from .rotations import quat_to_rpy, rpy_to_quat, wrap_angle
from .terrain import HeightMap, OutOfBoundsError, height_at, heights_at


class PlanningError(ValueError):
    pass


@dataclass(frozen=True)
class BodyState:
    position: tuple = (0.0, 0.0, 0.0)
    rpy: tuple = (0.0, 0.0, 0.0)
    linear_velocity: tuple = (0.0, 0.0, 0.0)
    angular_velocity: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("position", "rpy", "linear_velocity", "angular_velocity"):
            value = tuple(float(v) for v in getattr(self, name))
            if len(value) != 3 or not all(math.isfinite(v) for v in value):
                raise ValueError(f"{name} must be 3 finite numbers")
            object.__setattr__(self, name, value)

    @classmethod
    def trusted(cls, position, rpy, linear_velocity, angular_velocity) -> "BodyState":
        """Construct without validation from values already known to be finite 3-vectors."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "position", tuple(position))
        object.__setattr__(obj, "rpy", tuple(rpy))
        object.__setattr__(obj, "linear_velocity", tuple(linear_velocity))
        object.__setattr__(obj, "angular_velocity", tuple(angular_velocity))
        return obj

    @property
    def yaw(self) -> float:
        return self.rpy[2]

    @property
    def xy(self) -> tuple[float, float]:
        return self.position[0], self.position[1]


@dataclass(frozen=True)
class GaitPattern:
    """Per-leg swing windows inside one cycle.

    Leg ``i`` swings during phase ``[phase_offsets[i], phase_offsets[i] + 1 - duty_factor]``;
    every leg stands during the opening ``full_stance_fraction`` of the cycle.
    """

    cycle_duration: float = 2.0
    phase_offsets: tuple = (0.15, 0.55, 0.55, 0.15)
    duty_factor: float = 0.6
    full_stance_fraction: float = 0.15
    step_height: float = 0.05

    def __post_init__(self):
        if not self.cycle_duration > 0:
            raise ValueError("cycle duration must be positive")
        if len(self.phase_offsets) != N_LEGS:
            raise ValueError("need 4 phase offsets")
        if not 0 < self.duty_factor <= 1:
            raise ValueError("duty factor must lie in (0, 1]")
        if not 0 <= self.full_stance_fraction < 1:
            raise ValueError("full-stance fraction must lie in [0, 1)")
        if self.full_stance_fraction >= self.duty_factor:
            raise ValueError("full-stance fraction must be shorter than the duty window")
        swing = 1.0 - self.duty_factor
        for off in self.phase_offsets:
            if not 0 <= off < 1:
                raise ValueError("phase offsets must lie in [0, 1)")
            if swing > 0 and (off < self.full_stance_fraction - 1e-12 or off + swing > 1 + 1e-12):
                raise ValueError("swing windows must fit between the full-stance window and cycle end")
        object.__setattr__(self, "phase_offsets", tuple(float(v) for v in self.phase_offsets))

    @property
    def swing_fraction(self) -> float:
        return 1.0 - self.duty_factor


@dataclass(frozen=True)
class PlannerConfig:
    node_dt: float = 0.01
    max_stride: float = 0.3        # base travel per gait cycle, m
    max_turn: float = 0.5          # base yaw change per gait cycle, rad
    max_step_height: float = 0.08
    reach_margin: float = 0.02
    clearance_margin: float = 0.01


@dataclass(frozen=True)
class TrajectoryNode:
    t: float
    base: BodyState
    feet: np.ndarray
    contact: tuple


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    reasons: tuple = ()

    def __bool__(self):
        return self.feasible


@dataclass(eq=False)
class GaitPlan:
    """Node arrays sampled every ``dt`` seconds from t = 0."""

    t: np.ndarray
    base_pos: np.ndarray
    base_rpy: np.ndarray
    base_vel: np.ndarray
    base_omega: np.ndarray
    feet: np.ndarray
    contact: np.ndarray
    dt: float
    terrain: HeightMap | None = None
    pattern: GaitPattern | None = None
    seams: tuple = ()
    _t_list: list = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.t)
        shapes = {"base_pos": (n, 3), "base_rpy": (n, 3), "base_vel": (n, 3),
                  "base_omega": (n, 3), "feet": (n, N_LEGS, 3), "contact": (n, N_LEGS)}
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if n == 0:
            raise ValueError("empty plan")
        if self.t[0] != 0.0:
            raise ValueError("plan must start at t = 0")
        if n > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("node times must be strictly increasing")
        self._t_list = self.t.tolist()

    def __len__(self):
        return len(self.t)

    @property
    def duration(self) -> float:
        return float(self.t[-1])

    def node(self, i: int) -> TrajectoryNode:
        base = BodyState.trusted(self.base_pos[i].tolist(), self.base_rpy[i].tolist(),
                                 self.base_vel[i].tolist(), self.base_omega[i].tolist())
        return TrajectoryNode(float(self.t[i]), base, self.feet[i].copy(),
                              tuple(bool(c) for c in self.contact[i]))

    def nodes(self):
        for i in range(len(self.t)):
            yield self.node(i)

    def index_of(self, t: float) -> int | None:
        i = bisect.bisect_left(self._t_list, t)
        if i < len(self._t_list) and abs(self._t_list[i] - t) <= 1e-9:
            return i
        if i > 0 and abs(self._t_list[i - 1] - t) <= 1e-9:
            return i - 1
        return None

    def bracket(self, t: float):
        """Index ``i`` and weight ``w`` with t between nodes i and i + 1."""
        if not (0.0 <= t <= self._t_list[-1] + 1e-12):
            raise PlanningError(f"t = {t} outside plan range [0, {self._t_list[-1]}]")
        i = bisect.bisect_right(self._t_list, t) - 1
        if i >= len(self._t_list) - 1:
            return len(self._t_list) - 1, 0.0
        t0 = self._t_list[i]
        return i, (t - t0) / (self._t_list[i + 1] - t0)


# ---------------------------------------------------------------------------
# helpers


def hip_xy(model: RobotModel, x: float, y: float, yaw: float) -> list[tuple[float, float]]:
    c, s = math.cos(yaw), math.sin(yaw)
    return [(x + c * hx - s * hy, y + s * hx + c * hy) for hx, hy, _ in model.hip_offsets]


def base_height(terrain: HeightMap, model: RobotModel, x: float, y: float, yaw: float) -> float:
    """Standing height above the mean terrain under the four hips."""
    hips = hip_xy(model, x, y, yaw)
    return model.standing_height + sum(height_at(terrain, hx, hy) for hx, hy in hips) / N_LEGS


def nominal_feet(terrain: HeightMap, model: RobotModel, x: float, y: float, yaw: float) -> np.ndarray:
    return np.array([(hx, hy, height_at(terrain, hx, hy)) for hx, hy in hip_xy(model, x, y, yaw)])


def body_state_at(terrain: HeightMap, model: RobotModel, x: float, y: float, yaw: float) -> BodyState:
    return BodyState((x, y, base_height(terrain, model, x, y, yaw)), (0.0, 0.0, yaw))


def _base_heights(terrain, model, xs, ys, yaws):
    c, s = np.cos(yaws), np.sin(yaws)
    total = np.zeros_like(xs)
    for hx, hy, _ in model.hip_offsets:
        total += heights_at(terrain, xs + c * hx - s * hy, ys + s * hx + c * hy)
    return model.standing_height + total / N_LEGS


def _max_terrain_along(terrain, p0, p1) -> float:
    dist = math.hypot(p1[0] - p0[0], p1[1] - p0[1])
    n = max(2, int(math.ceil(dist / (0.25 * terrain.resolution))) + 1)
    w = np.linspace(0.0, 1.0, n)
    return float(np.max(heights_at(terrain, p0[0] + (p1[0] - p0[0]) * w, p0[1] + (p1[1] - p0[1]) * w)))


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


# lift / traverse / lower breakpoints of the swing profile, in swing phase
_LIFT_END = 0.3
_LOWER_START = 0.7
# the horizontal traverse overlaps both, so the foot is already descending
# when it reaches furthest forward
_TRAVERSE = (0.2, 0.8)


def swing_profile(p0, p1, apex: float, u):
    """Foot position along a swing at phase ``u`` in [0, 1] (array)."""
    u = np.asarray(u, dtype=float)
    w = _smoothstep((u - _TRAVERSE[0]) / (_TRAVERSE[1] - _TRAVERSE[0]))
    xy0 = np.asarray(p0[:2])
    xy1 = np.asarray(p1[:2])
    xy = xy0[None, :] + (xy1 - xy0)[None, :] * w[:, None]
    rise = 0.5 * (1.0 - np.cos(np.pi * np.clip(u / _LIFT_END, 0.0, 1.0)))
    fall = 0.5 * (1.0 - np.cos(np.pi * np.clip((u - _LOWER_START) / (1.0 - _LOWER_START), 0.0, 1.0)))
    z = np.where(u < _LIFT_END, p0[2] + (apex - p0[2]) * rise,
                 np.where(u > _LOWER_START, apex + (p1[2] - apex) * fall, apex))
    return np.column_stack([xy, z])


# ---------------------------------------------------------------------------
# planning


def plan_gait(start: BodyState, goal: BodyState, terrain: HeightMap, pattern: GaitPattern | None = None,
              model: RobotModel | None = None, start_feet=None,
              config: PlannerConfig | None = None) -> GaitPlan:
    """Gait plan from ``start`` to ``goal``.

    ``start_feet`` (4x3, world frame) defaults to the nominal stance under
    ``start``; pass the feet of the plan being extended when stitching.
    """
    pattern = pattern or GaitPattern()
    model = model or RobotModel()
    cfg = config or PlannerConfig()
    for label, state in (("start", start), ("goal", goal)):
        if not terrain.contains(*state.xy):
            raise PlanningError(f"{label} {state.xy} outside the terrain")

    cycle = pattern.cycle_duration
    per_cycle = cycle / cfg.node_dt
    if abs(per_cycle - round(per_cycle)) > 1e-9:
        raise PlanningError("node spacing must divide the cycle duration")
    per_cycle = int(round(per_cycle))

    x0, y0 = start.xy
    x1, y1 = goal.xy
    dist = math.hypot(x1 - x0, y1 - y0)
    dyaw = wrap_angle(goal.yaw - start.yaw)
    moving = dist > 1e-9 or abs(dyaw) > 1e-9
    if moving:
        n_cycles = max(1, math.ceil(dist / cfg.max_stride - 1e-9),
                       math.ceil(abs(dyaw) / cfg.max_turn - 1e-9))
    else:
        n_cycles = 1
    if moving and pattern.swing_fraction <= 0:
        raise PlanningError("a pattern without swing cannot move the base")
    n = n_cycles * per_cycle + 1
    duration = n_cycles * cycle
    t = np.arange(n) * cfg.node_dt
    t[-1] = duration

    tau = t / duration
    s = tau * tau * (3.0 - 2.0 * tau)
    ds = 6.0 * tau * (1.0 - tau) / duration
    xs = x0 * (1.0 - s) + x1 * s
    ys = y0 * (1.0 - s) + y1 * s
    yaws = start.yaw + dyaw * s
    try:
        zt = _base_heights(terrain, model, xs, ys, yaws)
    except OutOfBoundsError as exc:
        raise PlanningError(f"body footprint leaves the terrain: {exc}") from None
    zs = zt + (start.position[2] - zt[0]) * (1.0 - s)
    roll = start.rpy[0] * (1.0 - s)
    pitch = start.rpy[1] * (1.0 - s)

    base_pos = np.column_stack([xs, ys, zs])
    base_rpy = np.column_stack([roll, pitch, yaws])
    vz = np.gradient(zs, t) if n > 1 else np.zeros(1)
    base_vel = np.column_stack([(x1 - x0) * ds, (y1 - y0) * ds, vz])
    base_omega = np.column_stack([np.zeros(n), np.zeros(n), dyaw * ds])

    if start_feet is None:
        feet0 = nominal_feet(terrain, model, x0, y0, start.yaw)
    else:
        feet0 = np.array(start_feet, dtype=float).reshape(N_LEGS, 3)
    feet = np.repeat(feet0[None, :, :], n, axis=0)
    contact = np.ones((n, N_LEGS), dtype=bool)

    if moving:
        swing_nodes = int(round(pattern.swing_fraction * per_cycle))
        for leg in range(N_LEGS):
            lo_idx = [c * per_cycle + int(round(pattern.phase_offsets[leg] * per_cycle))
                      for c in range(n_cycles)]
            current = feet0[leg].copy()
            for j, i_lo in enumerate(lo_idx):
                i_td = i_lo + swing_nodes
                i_next = lo_idx[j + 1] if j + 1 < len(lo_idx) else n - 1
                last = j + 1 == len(lo_idx)
                k = n - 1 if last else (i_td + i_next) // 2
                hx, hy = hip_xy(model, xs[k], ys[k], yaws[k])[leg]
                try:
                    target = np.array([hx, hy, height_at(terrain, hx, hy)])
                    apex = max(current[2], target[2], _max_terrain_along(terrain, current, target)) \
                        + pattern.step_height
                except OutOfBoundsError as exc:
                    raise PlanningError(f"foothold leaves the terrain: {exc}") from None
                u = (t[i_lo + 1:i_td] - t[i_lo]) / (t[i_td] - t[i_lo])
                feet[i_lo + 1:i_td, leg] = swing_profile(current, target, apex, u)
                contact[i_lo + 1:i_td, leg] = False
                feet[i_td:, leg] = target
                current = target

    # exact seam: the first node reproduces the start state bit for bit
    base_pos[0] = start.position
    base_rpy[0] = start.rpy
    base_vel[0] = start.linear_velocity
    base_omega[0] = start.angular_velocity
    return GaitPlan(t, base_pos, base_rpy, base_vel, base_omega, feet, contact,
                    cfg.node_dt, terrain, pattern)


def _swing_runs(contact_col):
    """(first_swing_index, touchdown_index) for every swing run of one leg."""
    runs = []
    n = len(contact_col)
    i = 0
    while i < n:
        if not contact_col[i]:
            j = i
            while j < n and not contact_col[j]:
                j += 1
            runs.append((i, j))
            i = j
        else:
            i += 1
    return runs


def check_feasibility(plan: GaitPlan, model: RobotModel | None = None, terrain: HeightMap | None = None,
                      config: PlannerConfig | None = None) -> Feasibility:
    """Kinematic feasibility proxy for a gait plan.

    Checks leg reach, swing clearance, body clearance and per-step foothold
    height change at every node.
    """
    model = model or RobotModel()
    terrain = terrain if terrain is not None else plan.terrain
    if terrain is None:
        raise PlanningError("no terrain to check against")
    cfg = config or PlannerConfig()
    reasons = []

    yaw = plan.base_rpy[:, 2]
    roll = plan.base_rpy[:, 0]
    pitch = plan.base_rpy[:, 1]
    cr, sr, cp, sp = np.cos(roll), np.sin(roll), np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    rot = np.empty((len(plan), 3, 3))
    rot[:, 0] = np.column_stack([cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr])
    rot[:, 1] = np.column_stack([sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr])
    rot[:, 2] = np.column_stack([-sp, cp * sr, cp * cr])
    offsets = np.array(model.hip_offsets)
    hips = plan.base_pos[:, None, :] + np.einsum("nij,lj->nli", rot, offsets)
    dist = np.linalg.norm(plan.feet - hips, axis=2)
    if np.any(dist > model.reach - cfg.reach_margin):
        reasons.append("reach exceeded")

    try:
        ground = heights_at(terrain, plan.feet[:, :, 0], plan.feet[:, :, 1])
        body_points = np.concatenate([plan.base_pos[:, None, :2], hips[:, :, :2]], axis=1)
        under_body = heights_at(terrain, body_points[:, :, 0], body_points[:, :, 1]).max(axis=1)
    except OutOfBoundsError:
        reasons.append("terrain bounds exceeded")
        return Feasibility(False, tuple(reasons))

    if np.any(plan.base_pos[:, 2] - model.body_half_height < under_body):
        reasons.append("undercarriage collision")

    step_bad = clearance_bad = False
    for leg in range(N_LEGS):
        col = plan.contact[:, leg]
        for i0, i1 in _swing_runs(col):
            if i0 == 0 or i1 >= len(plan):
                continue
            lift = plan.feet[i0 - 1, leg]
            land = plan.feet[i1, leg]
            if abs(land[2] - lift[2]) > cfg.max_step_height + 1e-12:
                step_bad = True
            seg = plan.feet[i0:i1, leg]
            gap = seg[:, 2] - ground[i0:i1, leg]
            if np.any(gap < -1e-9):
                clearance_bad = True
            moving = (np.linalg.norm(seg[:, :2] - lift[:2], axis=1) > 1e-9) & \
                     (np.linalg.norm(seg[:, :2] - land[:2], axis=1) > 1e-9)
            if np.any(gap[moving] < cfg.clearance_margin):
                clearance_bad = True
    if step_bad:
        reasons.append("step height exceeded")
    if clearance_bad:
        reasons.append("swing clearance violated")
    return Feasibility(not reasons, tuple(reasons))


def check_node_invariants(plan: GaitPlan, terrain: HeightMap | None = None, tol: float = 1e-6) -> list[str]:
    """Contact-height consistency and zero slip; returns violation messages."""
    terrain = terrain if terrain is not None else plan.terrain
    problems = []
    ground = heights_at(terrain, plan.feet[:, :, 0], plan.feet[:, :, 1])
    bad = plan.contact & (np.abs(plan.feet[:, :, 2] - ground) > tol)
    for i, leg in zip(*np.nonzero(bad)):
        problems.append(f"t={plan.t[i]:.4f} leg {leg}: contact foot off the ground")
    for leg in range(N_LEGS):
        col = plan.contact[:, leg]
        i = 0
        n = len(col)
        while i < n:
            if col[i]:
                j = i
                while j < n and col[j]:
                    j += 1
                drift = np.abs(plan.feet[i:j, leg, :2] - plan.feet[i, leg, :2]).max()
                if drift > tol:
                    problems.append(f"t={plan.t[i]:.4f} leg {leg}: stance foot slips {drift:.3g} m")
                i = j
            else:
                i += 1
    if len(plan) > 1 and np.any(np.abs(np.diff(plan.t) - plan.dt) > 1e-9):
        problems.append("non-uniform node spacing")
    return problems


def sample(plan: GaitPlan, t: float) -> TrajectoryNode:
    """Linear interpolation between bracketing nodes; contacts from the earlier one."""
    i, w = plan.bracket(t)
    if w == 0.0:
        node = plan.node(i)
        return replace(node, t=float(t))
    j = i + 1

    def lerp(a):
        return a[i] + (a[j] - a[i]) * w

    r0, r1 = plan.base_rpy[i].tolist(), plan.base_rpy[j].tolist()
    rpy = [a + wrap_angle(b - a) * w for a, b in zip(r0, r1)]
    base = BodyState.trusted(lerp(plan.base_pos).tolist(), rpy, lerp(plan.base_vel).tolist(),
                             lerp(plan.base_omega).tolist())
    return TrajectoryNode(float(t), base, lerp(plan.feet), tuple(bool(c) for c in plan.contact[i]))


def full_contact_nodes(plan: GaitPlan) -> list[float]:
    return [float(v) for v in plan.t[np.all(plan.contact, axis=1)]]


# ---------------------------------------------------------------------------
# CSV


def _plan_header():
    cols = ["t", "x", "y", "z", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz"]
    cols += [f"foot{leg}_{a}" for leg in range(N_LEGS) for a in "xyz"]
    cols += [f"contact{leg}" for leg in range(N_LEGS)]
    return cols


def plan_to_csv(plan: GaitPlan) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_plan_header())
    for i in range(len(plan)):
        q = rpy_to_quat(*plan.base_rpy[i])
        row = [plan.t[i], *plan.base_pos[i], *q, *plan.base_vel[i], *plan.base_omega[i],
               *plan.feet[i].ravel()]
        writer.writerow([repr(float(v)) for v in row] + [int(c) for c in plan.contact[i]])
    return buf.getvalue()


def plan_from_csv(text: str, terrain: HeightMap | None = None) -> GaitPlan:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != _plan_header():
        raise PlanningError("unexpected gait plan CSV header")
    rows = [r for r in reader if r]
    data = np.array([[float(v) for v in r] for r in rows])
    t = data[:, 0]
    rpy = np.array([quat_to_rpy(*q) for q in data[:, 4:8]])
    plan = GaitPlan(t, data[:, 1:4], rpy, data[:, 8:11], data[:, 11:14],
                    data[:, 14:26].reshape(-1, N_LEGS, 3), data[:, 26:30].astype(int) == 1,
                    float(t[1] - t[0]) if len(t) > 1 else 0.0, terrain)
    return plan
