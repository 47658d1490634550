"""Deterministic 1 kHz plant and the closed-loop episode runner.

The plant integrates each joint as a damped double integrator and moves
the base kinematically: every tick the base pose is chosen so that the
feet currently in stance stay where they touched down (least squares over
the stance legs).  There are no contact forces; a foot lifts off when the
legs pull it upward and touches down when it reaches the terrain.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .controller import CONTROL_DT, CONTROL_IK, Controller, Gains
from .global_planner import (DEFAULT_PROBE_LENGTH, DEFAULT_REPLAN_THRESHOLD, DEFAULT_STEP_SIZE,
                             DEFAULT_THRESHOLD, StitchSchedule, goal_on_path, plan_global, replan_trigger,
                             stitch, trim)
from .global_planner.planner import DEFAULT_CLEARANCE
from .global_planner.stitching import seam_discrepancy
from .kinematics import N_JOINTS, N_LEGS, IkParams, JointState, RobotModel, _fk, ik_dls, nominal_joint_angles
from .local_planner import (BodyState, GaitPattern, GaitPlan, PlannerConfig, check_feasibility,
                            check_node_invariants, nominal_feet, plan_gait)
from .robot_interface.packets import MODE_ONBOARD_PD, CommandPacket
from .rotations import matrix_to_rpy, rpy_to_matrix, rotvec_to_matrix
from .terrain import HeightMap, height_at

OUTCOMES = ("success", "fell", "out_of_bounds", "timeout")

# penalty on per-tick base rotation (world roll, pitch, yaw increments).  Tilt
# is expensive, so a leg that pulls its foot up lifts it instead of rocking
# the body; yaw is nearly free so stance feet can turn the body
_ROT_REG = np.diag([0.0, 0.0, 0.0, 1.0, 1.0, 1e-6])


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    joint_inertia: float = 1e-3           # kg m^2, reflected through the gearbox
    joint_damping: float = 0.0            # N m s / rad
    gravity: float = 9.81
    max_tilt: float = 0.6                 # rad, |roll| or |pitch| beyond this is a fall
    min_stance_legs: int = 2
    low_stance_time: float = 0.5          # s with fewer stance legs than the minimum before a fall
    bounds_margin: float = 0.1
    touchdown_tolerance: float = 2e-3     # m above terrain that still counts as contact
    liftoff_tolerance: float = 5e-4       # m a stance foot must be pulled up to lift off
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.joint_inertia > 0:
            raise ValueError("joint inertia must be positive")
        if self.joint_damping < 0:
            raise ValueError("joint damping must be non-negative")


@dataclass
class SimState:
    time: float
    base: BodyState
    joints: JointState
    contact: tuple = (True,) * N_LEGS
    anchors: np.ndarray | None = None     # world positions of stance feet
    fallen: bool = False
    out_of_bounds: bool = False
    low_stance_time: float = 0.0


class Plant:
    """Mutable plant; :func:`step` is the functional wrapper."""

    def __init__(self, state: SimState, config: SimConfig, terrain: HeightMap, model: RobotModel):
        self.cfg = config
        self.terrain = terrain
        self.model = model
        self.t = state.time
        self.p = np.array(state.base.position, dtype=float)
        self.R = rpy_to_matrix(*state.base.rpy)
        self.v = np.array(state.base.linear_velocity, dtype=float)
        self.w = np.array(state.base.angular_velocity, dtype=float)
        self.q = state.joints.q.copy()
        self.dq = state.joints.dq.copy()
        self.contact = list(state.contact)
        if state.anchors is None:
            self.anchors = self.feet_world()
        else:
            self.anchors = np.array(state.anchors, dtype=float)
        self.fallen = state.fallen
        self.out_of_bounds = state.out_of_bounds
        self.low_stance = state.low_stance_time
        self.steps = 0
        self.q_lo = np.array(model.q_min)
        self.q_hi = np.array(model.q_max)
        x0, x1, y0, y1 = terrain.bounds
        m = config.bounds_margin
        self._box = (x0 + m, x1 - m, y0 + m, y1 - m)

    # -- views ----------------------------------------------------------
    def feet_base(self) -> np.ndarray:
        q = self.q.tolist()
        return np.array([_fk(self.model, leg, *q[3 * leg:3 * leg + 3]) for leg in range(N_LEGS)])

    def feet_world(self) -> np.ndarray:
        return self.p + self.feet_base() @ self.R.T

    def rpy(self) -> tuple[float, float, float]:
        return matrix_to_rpy(self.R)

    def body_state(self) -> BodyState:
        return BodyState.trusted(self.p.tolist(), self.rpy(), self.v.tolist(), self.w.tolist())

    def joint_state(self) -> JointState:
        return JointState(self.q, self.dq)

    def state(self) -> SimState:
        return SimState(self.t, self.body_state(), self.joint_state(), tuple(self.contact),
                        self.anchors.copy(), self.fallen, self.out_of_bounds, self.low_stance)

    # -- dynamics -------------------------------------------------------
    def torques(self, packet: CommandPacket) -> np.ndarray:
        if packet.mode == MODE_ONBOARD_PD:
            tau = packet.kp * (packet.q_ref - self.q) + packet.kd * (packet.dq_ref - self.dq)
        else:
            tau = packet.tau.astype(float)
        lim = self.model.torque_limit
        return np.clip(tau, -lim, lim)

    def step(self, packet: CommandPacket):
        cfg = self.cfg
        dt = cfg.dt
        tau = self.torques(packet)
        self.dq = self.dq + dt * (tau - cfg.joint_damping * self.dq) / cfg.joint_inertia
        self.q = self.q + dt * self.dq
        hit = (self.q < self.q_lo) | (self.q > self.q_hi)
        if hit.any():
            self.q = np.clip(self.q, self.q_lo, self.q_hi)
            self.dq = np.where(hit, 0.0, self.dq)

        fb = self.feet_base()
        stance = [leg for leg in range(N_LEGS) if self.contact[leg]]
        dp = dth = None
        while stance:
            dp, dth = self._solve_base(fb, stance)
            # feet can push but not pull: the foot pulled highest above its
            # anchor lifts off and the base is solved again without it
            rf = fb @ self.R.T
            world = self.p + dp + rf + _cross_rows(dth, rf)
            rise = {leg: world[leg, 2] - self.anchors[leg, 2] for leg in stance}
            leg = max(stance, key=lambda i: (rise[i], -i))
            if rise[leg] <= cfg.liftoff_tolerance:
                break
            self.contact[leg] = False
            stance.remove(leg)
        if stance:
            self.p = self.p + dp
            self.R = rotvec_to_matrix(*dth) @ self.R
            self.v = dp / dt
            self.w = dth / dt
        else:
            self.v = self.v + np.array([0.0, 0.0, -cfg.gravity]) * dt
            self.p = self.p + self.v * dt
            self.R = rotvec_to_matrix(*(self.w * dt)) @ self.R

        world = self.p + fb @ self.R.T
        for leg in range(N_LEGS):
            if self.contact[leg]:
                continue
            x, y, z = world[leg]
            if not self.terrain.contains(x, y):
                continue
            ground = height_at(self.terrain, x, y)
            if z <= ground + cfg.touchdown_tolerance:
                self.contact[leg] = True
                self.anchors[leg] = (x, y, max(z, ground))

        self.t += dt
        self.steps += 1
        self._check_failures()

    def _solve_base(self, fb, stance):
        rows = []
        rhs = []
        for leg in stance:
            w = self.R @ fb[leg]
            r = self.anchors[leg] - self.p - w
            wx, wy, wz = w
            # dp - [w]x dth = r
            rows.append([1.0, 0.0, 0.0, 0.0, wz, -wy])
            rows.append([0.0, 1.0, 0.0, -wz, 0.0, wx])
            rows.append([0.0, 0.0, 1.0, wy, -wx, 0.0])
            rhs.extend(r)
        a = np.array(rows)
        b = np.array(rhs)
        sol = np.linalg.solve(a.T @ a + _ROT_REG, a.T @ b)
        return sol[:3], sol[3:]

    def _check_failures(self):
        roll, pitch, _ = self.rpy()
        if abs(roll) > self.cfg.max_tilt or abs(pitch) > self.cfg.max_tilt:
            self.fallen = True
        if sum(self.contact) < self.cfg.min_stance_legs:
            self.low_stance += self.cfg.dt
            if self.low_stance > self.cfg.low_stance_time + 1e-12:
                self.fallen = True
        else:
            self.low_stance = 0.0
        x0, x1, y0, y1 = self._box
        if not (x0 <= self.p[0] <= x1 and y0 <= self.p[1] <= y1):
            self.out_of_bounds = True

    def force_tilt(self, roll: float = 0.0, pitch: float = 0.0):
        """Test hook: overwrite the base tilt and re-run the failure checks."""
        _, _, yaw = self.rpy()
        self.R = rpy_to_matrix(roll, pitch, yaw)
        self._check_failures()


def _cross_rows(v, rows):
    """v x r for every row r."""
    vx, vy, vz = v
    out = np.empty_like(rows)
    out[:, 0] = vy * rows[:, 2] - vz * rows[:, 1]
    out[:, 1] = vz * rows[:, 0] - vx * rows[:, 2]
    out[:, 2] = vx * rows[:, 1] - vy * rows[:, 0]
    return out


def step(state: SimState, packet: CommandPacket, config: SimConfig, terrain: HeightMap,
         model: RobotModel) -> SimState:
    plant = Plant(state, config, terrain, model)
    plant.step(packet)
    return plant.state()


def standing_state(terrain: HeightMap, model: RobotModel, x: float, y: float, yaw: float,
                   t: float = 0.0) -> SimState:
    """Robot standing on its nominal footholds with all four feet down."""
    from .local_planner import base_height
    z = base_height(terrain, model, x, y, yaw)
    base = BodyState((x, y, z), (0.0, 0.0, yaw))
    feet = nominal_feet(terrain, model, x, y, yaw)
    rot = rpy_to_matrix(0.0, 0.0, yaw)
    q = nominal_joint_angles(model)
    tight = IkParams(tolerance=1e-12, max_iterations=100)
    for leg in range(N_LEGS):
        target = rot.T @ (feet[leg] - base.position)
        q[3 * leg:3 * leg + 3] = ik_dls(model, leg, target, q[3 * leg:3 * leg + 3], tight).q
    return SimState(t, base, JointState(q, np.zeros(N_JOINTS)), (True,) * N_LEGS, feet)


# ---------------------------------------------------------------------------
# run log


@dataclass(eq=False)
class RunLog:
    t: np.ndarray
    ref_base: np.ndarray        # (n, 6): x y z roll pitch yaw
    act_base: np.ndarray
    q_ref: np.ndarray | None
    q: np.ndarray | None
    contact: np.ndarray
    outcome: str
    distance: float
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def duration(self) -> float:
        return float(self.t[-1] + self.metadata.get("dt", CONTROL_DT)) if len(self.t) else 0.0

    def csv_header(self) -> list[str]:
        cols = ["t"]
        cols += [f"ref_{a}" for a in ("x", "y", "z", "roll", "pitch", "yaw")]
        cols += [f"act_{a}" for a in ("x", "y", "z", "roll", "pitch", "yaw")]
        if self.q_ref is not None:
            cols += [f"q_ref{i}" for i in range(N_JOINTS)] + [f"q{i}" for i in range(N_JOINTS)]
        cols += [f"c{i}" for i in range(N_LEGS)]
        return cols

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.csv_header())
        blocks = [self.t[:, None], self.ref_base, self.act_base]
        if self.q_ref is not None:
            blocks += [self.q_ref, self.q]
        data = np.hstack(blocks).tolist()
        contact = self.contact.astype(int).tolist()
        for row, c in zip(data, contact):
            w.writerow([repr(v) for v in row] + c)
        return buf.getvalue()

    def summary(self) -> dict:
        out = {"outcome": self.outcome, "distance": self.distance, "samples": len(self.t)}
        out.update(self.metadata)
        return out

    def save(self, csv_path, json_path=None):
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())
        if json_path is not None:
            with open(json_path, "w", encoding="utf-8") as fh:
                json.dump(self.summary(), fh, indent=1, sort_keys=True)
                fh.write("\n")

    @classmethod
    def from_csv(cls, text: str, summary: dict | None = None) -> "RunLog":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader if row])
        if data.size == 0:
            data = np.zeros((0, len(header)))
        has_joints = "q_ref0" in header
        summary = dict(summary or {})
        j = 13
        q_ref = q = None
        if has_joints:
            q_ref, q = data[:, 13:25], data[:, 25:37]
            j = 37
        return cls(data[:, 0], data[:, 1:7], data[:, 7:13], q_ref, q, data[:, j:j + 4].astype(bool),
                   summary.pop("outcome", "timeout"), float(summary.pop("distance", 0.0)), summary)


def load_run_log(csv_path, json_path=None) -> RunLog:
    with open(csv_path, encoding="utf-8") as fh:
        text = fh.read()
    summary = None
    if json_path is not None:
        with open(json_path, encoding="utf-8") as fh:
            summary = json.load(fh)
    return RunLog.from_csv(text, summary)


class _Recorder:
    def __init__(self, capacity: int, joints: bool):
        self.n = 0
        self.t = np.empty(capacity)
        self.ref = np.empty((capacity, 6))
        self.act = np.empty((capacity, 6))
        self.q_ref = np.empty((capacity, N_JOINTS)) if joints else None
        self.q = np.empty((capacity, N_JOINTS)) if joints else None
        self.contact = np.empty((capacity, N_LEGS), dtype=bool)

    def add(self, t, ref, act, q_ref, q, contact):
        i = self.n
        self.t[i] = t
        self.ref[i] = ref
        self.act[i] = act
        if self.q_ref is not None:
            self.q_ref[i] = q_ref
            self.q[i] = q
        self.contact[i] = contact
        self.n += 1

    def arrays(self):
        n = self.n
        cut = lambda a: None if a is None else a[:n].copy()  # noqa: E731
        return self.t[:n].copy(), self.ref[:n].copy(), self.act[:n].copy(), cut(self.q_ref), cut(self.q), \
            self.contact[:n].copy()


# ---------------------------------------------------------------------------
# episodes


@dataclass(frozen=True)
class EpisodeSpec:
    """Everything the closed loop needs besides the plant configuration."""

    terrain: HeightMap
    start: tuple
    goal: tuple
    time_limit: float = 60.0
    step_size: float = DEFAULT_STEP_SIZE
    threshold: float = DEFAULT_THRESHOLD
    probe_length: float = DEFAULT_PROBE_LENGTH
    clearance: float = DEFAULT_CLEARANCE
    fss_workers: int = 1
    mode: str = "onboard_pd"
    gains: Gains = field(default_factory=Gains.uniform)
    ik: IkParams = CONTROL_IK
    replan_threshold: float = DEFAULT_REPLAN_THRESHOLD
    goal_radius: float = 0.15
    pattern: GaitPattern = field(default_factory=GaitPattern)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    record_joints: bool = True
    feasibility: object = None            # precomputed FeasibilityMap, optional
    label: dict = field(default_factory=dict)


class EpisodeRunner:
    """Global planning once, then stitched local segments tracked at 1 kHz."""

    def __init__(self, spec: EpisodeSpec, config: SimConfig | None = None, model: RobotModel | None = None):
        self.spec = spec
        self.cfg = config or SimConfig()
        self.model = model or RobotModel()
        self.terrain = spec.terrain
        self.schedule = StitchSchedule(spec.step_size)
        self.decisions = 0
        self.segments = []
        self.seams = []
        self.replans = 0
        sx, sy = map(float, spec.start)
        gx, gy = map(float, spec.goal)
        self.goal_xy = (gx, gy)
        if math.hypot(gx - sx, gy - sy) < 1e-9:
            self.global_plan = None
            self.path = None
            yaw = 0.0
        else:
            self.global_plan = plan_global(self.terrain, (sx, sy), (gx, gy), spec.threshold, spec.probe_length,
                                           spec.clearance, spec.fss_workers, self.model,
                                           feasibility=spec.feasibility)
            self.path = self.global_plan.path
            yaw = self.path.heading(0.0)
        self.initial = standing_state(self.terrain, self.model, sx, sy, yaw)
        self.window: GaitPlan | None = None
        self.offset = 0.0
        self.s_end = 0.0           # path arc length reached by the end of the window
        self.final_queued = self.path is None

    # -- segment bookkeeping -------------------------------------------
    def _solve_segment(self, start: BodyState, feet, s_from: float, s_goal_min: float | None):
        pattern, cfg = self.spec.pattern, self.spec.planner
        if self.path is None:
            plan = plan_gait(start, start, self.terrain, pattern, self.model, feet, cfg)
            return plan, 0.0, check_feasibility(plan, self.model, self.terrain, cfg), 0
        step = self.schedule.step_size
        verdict = None
        for attempt in range(4):
            s_goal = min(s_from + step, self.path.length)
            if s_goal_min is not None:
                s_goal = min(max(s_goal, s_goal_min), self.path.length)
            goal = goal_on_path(self.path, s_goal, self.terrain, self.model)
            plan = plan_gait(start, goal, self.terrain, pattern, self.model, feet, cfg)
            verdict = check_feasibility(plan, self.model, self.terrain, cfg)
            if verdict.feasible:
                return plan, s_goal, verdict, attempt
            step *= 0.5
        # nothing feasible ahead: stand for a cycle and try again at the next decision
        plan = plan_gait(start, start, self.terrain, pattern, self.model, feet, cfg)
        return plan, None, check_feasibility(plan, self.model, self.terrain, cfg), 4

    def _append_segment(self, t_now: float, actual: BodyState):
        if self.window is None:
            init = self.initial
            start, feet = init.base, init.anchors
        else:
            last = len(self.window) - 1
            start = self.window.node(last).base
            feet = self.window.feet[last]
        if self.window is not None and self.path is not None:
            decision = replan_trigger(actual, self.window, t_now - self.offset, self.spec.replan_threshold)
            if decision.replan:
                # the robot strayed: aim the next goal from where it actually is
                self.replans += 1
                s_actual = self.path.project(*actual.xy)
                s_from = min(self.s_end, s_actual)
            else:
                s_from = self.s_end
        else:
            s_from = self.s_end
        plan, s_goal, verdict, retries = self._solve_segment(start, feet, s_from, None)
        problems = check_node_invariants(plan, self.terrain)
        self.segments.append({"index": len(self.segments), "t_start": round(self.offset + (
            0.0 if self.window is None else self.window.duration), 9), "duration": plan.duration,
            "feasible": verdict.feasible, "reasons": list(verdict.reasons), "invariant_violations": len(problems),
            "retries": retries})
        if s_goal is not None:
            self.s_end = max(self.s_end, s_goal)
        if self.path is None or (self.path is not None and self.s_end >= self.path.length - 1e-9):
            self.final_queued = True
        if self.window is None:
            self.window = plan
            self.offset = t_now
            return
        at = self.window.duration
        gap = seam_discrepancy(self.window, len(self.window) - 1, plan)
        self.window = stitch(self.window, plan, at)
        i = self.window.index_of(at)
        self.seams.append({"t": round(self.offset + at, 9), "discrepancy": gap,
                           "full_contact": bool(self.window.contact[i].all())})

    def decide(self, t_now: float, actual: BodyState):
        """One global-planner decision: re-root the window and keep one cycle of look-ahead."""
        self.decisions += 1
        cycle = self.spec.pattern.cycle_duration
        if self.window is not None:
            tp = t_now - self.offset
            if 0.0 < tp <= self.window.duration + 1e-9:
                i = self.window.index_of(tp)
                if i is not None and self.window.contact[i].all():
                    self.window = trim(self.window, tp)
                    self.offset = t_now
        for _ in range(2):
            remaining = math.inf if self.window is None else self.window.duration - (t_now - self.offset)
            if self.window is not None and (remaining > cycle + 1e-9 or self.final_queued):
                break
            if self.window is None and self.final_queued and self.path is not None:
                break
            self._append_segment(t_now, actual)
            if self.final_queued:
                break

    def done(self, t: float) -> bool:
        return self.final_queued and self.window is not None and t - self.offset >= self.window.duration - 1e-9

    # -- main loop -----------------------------------------------------
    def run(self, on_tick=None) -> RunLog:
        """Closed loop until success, failure or the time limit.

        ``on_tick(k, t)`` is called after every plant step; it observes only
        and cannot change the run.
        """
        spec, cfg = self.spec, self.cfg
        plant = Plant(self.initial, cfg, self.terrain, self.model)
        self.decide(0.0, plant.body_state())
        ctrl = Controller(self.model, self.window, spec.gains, spec.mode, spec.ik)
        ctrl.swap_plan(self.window, self.offset)
        n_max = int(round(spec.time_limit / cfg.dt))
        rec = _Recorder(n_max, spec.record_joints)
        decision_every = int(round(spec.pattern.cycle_duration / cfg.dt))
        outcome = "timeout"
        for k in range(n_max):
            t = k * cfg.dt
            if k > 0 and k % decision_every == 0:
                self.decide(t, plant.body_state())
                ctrl.swap_plan(self.window, self.offset)
            actual = plant.body_state()
            packet = ctrl.tick(t, plant.joint_state(), actual)
            node = ctrl.last_node
            rec.add(t, (*node.base.position, *node.base.rpy), (*actual.position, *actual.rpy),
                    ctrl.last_ref.q_ref, plant.q, plant.contact)
            plant.step(packet)
            if on_tick is not None:
                on_tick(k, plant.t)
            if plant.fallen:
                outcome = "fell"
                break
            if plant.out_of_bounds:
                outcome = "out_of_bounds"
                break
            if self.done(plant.t) and math.dist(plant.p[:2], self.goal_xy) <= spec.goal_radius:
                outcome = "success"
                break
        t_arr, ref, act, q_ref, q, contact = rec.arrays()
        start_xy = np.array(spec.start, dtype=float)
        distance = float(np.hypot(*(plant.p[:2] - start_xy)))
        meta = {
            "dt": cfg.dt,
            "plant": "kinematic base, stance-foot constraint; no contact forces",
            "controller_ticks": ctrl.ticks,
            "plant_steps": plant.steps,
            "global_decisions": self.decisions,
            "replans": self.replans,
            "degraded_ticks": ctrl.degraded_ticks,
            "segments": self.segments,
            "seams": self.seams,
            "start": list(map(float, spec.start)),
            "goal": list(self.goal_xy),
            "final_position": [float(v) for v in plant.p],
            "goal_error": float(math.dist(plant.p[:2], self.goal_xy)),
            "goal_radius": spec.goal_radius,
            "fallen": plant.fallen,
            "out_of_bounds": plant.out_of_bounds,
            "mode": spec.mode,
            "fss_workers": spec.fss_workers,
            "seed": cfg.seed,
            "path_length": None if self.path is None else self.path.length,
        }
        meta.update(spec.label)
        return RunLog(t_arr, ref, act, q_ref, q, contact, outcome, distance, meta)


def run_episode(spec: EpisodeSpec, config: SimConfig | None = None, model: RobotModel | None = None,
                on_tick=None) -> RunLog:
    return EpisodeRunner(spec, config, model).run(on_tick)


def sim_config_dict(config: SimConfig) -> dict:
    return asdict(config)


__all__ = [
    "EpisodeRunner", "EpisodeSpec", "OUTCOMES", "Plant", "RunLog", "SimConfig", "SimState", "load_run_log",
    "run_episode", "standing_state", "step",
]
