"""Leg kinematics for a 12-DoF quadruped (abduction, hip, knee per leg).

Each leg hangs from its hip offset. The abduction joint rotates the leg
plane about the base x axis; hip and knee form a planar two-link chain in
that plane. At q = 0 the leg points straight down.

The per-leg functions prefixed with an underscore work on plain floats and
are what the 1 kHz loop calls; the public wrappers return numpy arrays.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

LEG_NAMES = ("FL", "FR", "HL", "HR")
N_LEGS = 4
N_JOINTS = 12


@dataclass(frozen=True)
class RobotModel:
    hip_offsets: tuple = ((0.19, 0.1, 0.0), (0.19, -0.1, 0.0),
                          (-0.19, 0.1, 0.0), (-0.19, -0.1, 0.0))
    l_upper: float = 0.2
    l_lower: float = 0.2
    q_min: tuple = (-0.8, -1.7, -2.9) * 4
    q_max: tuple = (0.8, 1.7, -0.05) * 4
    axis_sign: tuple = (1,) * 12
    reduction: float = 9.0
    torque_limit: float = 2.5
    standing_height: float = 0.28
    body_half_height: float = 0.05
    kp: float = 3.0
    kd: float = 0.05

    def __post_init__(self):
        if not (self.l_upper > 0 and self.l_lower > 0):
            raise ValueError("link lengths must be positive")
        if len(self.hip_offsets) != N_LEGS:
            raise ValueError("need 4 hip offsets")
        object.__setattr__(self, "hip_offsets",
                           tuple(tuple(float(c) for c in h) for h in self.hip_offsets))
        for name in ("q_min", "q_max", "axis_sign"):
            if len(getattr(self, name)) != N_JOINTS:
                raise ValueError(f"{name} needs 12 entries")
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if any(lo >= hi for lo, hi in zip(self.q_min, self.q_max)):
            raise ValueError("q_min must be below q_max for every joint")
        if any(s not in (1, -1) for s in self.axis_sign):
            raise ValueError("axis signs must be +1 or -1")

    @property
    def reach(self) -> float:
        return self.l_upper + self.l_lower

    def leg_limits(self, leg: int):
        s = slice(3 * leg, 3 * leg + 3)
        return self.q_min[s], self.q_max[s]


def load_robot_model(path) -> RobotModel:
    """Load a JSON robot config; absent keys keep their defaults."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    known = {f.name for f in fields(RobotModel)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"unknown robot model keys: {', '.join(unknown)}")
    model = RobotModel()
    return replace(model, **{k: tuple(map(tuple, v)) if k == "hip_offsets" else
                             (tuple(v) if isinstance(v, list) else v)
                             for k, v in data.items()})


@dataclass(frozen=True)
class IkParams:
    lam: float = 1.0
    tolerance: float = 1e-4
    max_iterations: int = 50
    mu: float = 1e-6
    max_step: float = 1.0  # rad; caps a single update, 0 disables

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("damping factor must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.mu < 0:
            raise ValueError("regularizer must be non-negative")
        if self.max_step < 0:
            raise ValueError("max_step must be non-negative")


@dataclass
class JointState:
    q: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    dq: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).copy()
        self.dq = np.asarray(self.dq, dtype=float).copy()
        if self.q.shape != (N_JOINTS,) or self.dq.shape != (N_JOINTS,):
            raise ValueError("joint state needs 12 positions and 12 velocities")


# ---------------------------------------------------------------------------
# scalar core


def _fk(model: RobotModel, leg: int, a: float, h: float, k: float):
    l1, l2 = model.l_upper, model.l_lower
    hk = h + k
    px = l1 * math.sin(h) + l2 * math.sin(hk)
    pz = -l1 * math.cos(h) - l2 * math.cos(hk)
    sa, ca = math.sin(a), math.cos(a)
    ox, oy, oz = model.hip_offsets[leg]
    return ox + px, oy - sa * pz, oz + ca * pz


def _fk_jac(model: RobotModel, leg: int, a: float, h: float, k: float):
    """Foot position and row-major 3x3 Jacobian in one pass."""
    l1, l2 = model.l_upper, model.l_lower
    hk = h + k
    s_h, c_h = math.sin(h), math.cos(h)
    s_hk, c_hk = math.sin(hk), math.cos(hk)
    px = l1 * s_h + l2 * s_hk
    pz = -l1 * c_h - l2 * c_hk
    dpx_dh = l1 * c_h + l2 * c_hk
    dpx_dk = l2 * c_hk
    dpz_dh = l1 * s_h + l2 * s_hk
    dpz_dk = l2 * s_hk
    sa, ca = math.sin(a), math.cos(a)
    ox, oy, oz = model.hip_offsets[leg]
    pos = (ox + px, oy - sa * pz, oz + ca * pz)
    jac = (0.0, dpx_dh, dpx_dk,
           -ca * pz, -sa * dpz_dh, -sa * dpz_dk,
           -sa * pz, ca * dpz_dh, ca * dpz_dk)
    return pos, jac


def _dls_step(jac, ex: float, ey: float, ez: float, mu: float):
    """Solve (J^T J + mu I) dq = J^T e for a 3x3 J given row-major."""
    j00, j01, j02, j10, j11, j12, j20, j21, j22 = jac
    # normal matrix (symmetric)
    a00 = j00 * j00 + j10 * j10 + j20 * j20 + mu
    a01 = j00 * j01 + j10 * j11 + j20 * j21
    a02 = j00 * j02 + j10 * j12 + j20 * j22
    a11 = j01 * j01 + j11 * j11 + j21 * j21 + mu
    a12 = j01 * j02 + j11 * j12 + j21 * j22
    a22 = j02 * j02 + j12 * j12 + j22 * j22 + mu
    b0 = j00 * ex + j10 * ey + j20 * ez
    b1 = j01 * ex + j11 * ey + j21 * ez
    b2 = j02 * ex + j12 * ey + j22 * ez
    c00 = a11 * a22 - a12 * a12
    c01 = a02 * a12 - a01 * a22
    c02 = a01 * a12 - a02 * a11
    det = a00 * c00 + a01 * c01 + a02 * c02
    if det == 0.0 or not math.isfinite(det):
        # exactly singular and undamped; fall back to least squares
        sol = np.linalg.lstsq(np.array(jac).reshape(3, 3), np.array([ex, ey, ez]), rcond=None)[0]
        return float(sol[0]), float(sol[1]), float(sol[2])
    c11 = a00 * a22 - a02 * a02
    c12 = a01 * a02 - a00 * a12
    c22 = a00 * a11 - a01 * a01
    inv = 1.0 / det
    return ((c00 * b0 + c01 * b1 + c02 * b2) * inv,
            (c01 * b0 + c11 * b1 + c12 * b2) * inv,
            (c02 * b0 + c12 * b1 + c22 * b2) * inv)


def _ik(model: RobotModel, leg: int, tx: float, ty: float, tz: float,
        q0: float, q1: float, q2: float, lam: float, tol: float, max_iter: int, mu: float,
        max_step: float = 1.0):
    lo0, lo1, lo2 = model.q_min[3 * leg:3 * leg + 3]
    hi0, hi1, hi2 = model.q_max[3 * leg:3 * leg + 3]
    q0 = min(max(q0, lo0), hi0)
    q1 = min(max(q1, lo1), hi1)
    q2 = min(max(q2, lo2), hi2)
    iterations = 0
    while True:
        pos, jac = _fk_jac(model, leg, q0, q1, q2)
        ex, ey, ez = tx - pos[0], ty - pos[1], tz - pos[2]
        err = math.sqrt(ex * ex + ey * ey + ez * ez)
        if err < tol:
            return q0, q1, q2, True, iterations, err
        if iterations >= max_iter:
            return q0, q1, q2, False, iterations, err
        d0, d1, d2 = _dls_step(jac, ex, ey, ez, mu)
        # joints resting on a limit and pushed further are frozen and the
        # step is re-solved over the remaining ones
        for _ in range(2):
            p0 = (q0 <= lo0 and d0 < 0) or (q0 >= hi0 and d0 > 0)
            p1 = (q1 <= lo1 and d1 < 0) or (q1 >= hi1 and d1 > 0)
            p2 = (q2 <= lo2 and d2 < 0) or (q2 >= hi2 and d2 > 0)
            if not (p0 or p1 or p2):
                break
            j = list(jac)
            for col, pinned in enumerate((p0, p1, p2)):
                if pinned:
                    j[col] = j[col + 3] = j[col + 6] = 0.0
            d0, d1, d2 = _dls_step(j, ex, ey, ez, mu)
            d0 = 0.0 if p0 else d0
            d1 = 0.0 if p1 else d1
            d2 = 0.0 if p2 else d2
        if max_step > 0.0:
            norm = math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
            if norm > max_step:
                scale = max_step / norm
                d0, d1, d2 = d0 * scale, d1 * scale, d2 * scale
        q0 = min(max(q0 + lam * d0, lo0), hi0)
        q1 = min(max(q1 + lam * d1, lo1), hi1)
        q2 = min(max(q2 + lam * d2, lo2), hi2)
        iterations += 1


# ---------------------------------------------------------------------------
# public API


def forward_kinematics_leg(model: RobotModel, leg: int, q_leg) -> np.ndarray:
    """Foot position in the base frame."""
    _check_leg(leg)
    a, h, k = (float(v) for v in q_leg)
    return np.array(_fk(model, leg, a, h, k))


def forward_kinematics(model: RobotModel, q) -> np.ndarray:
    """All four feet, shape (4, 3)."""
    q = np.asarray(q, dtype=float)
    return np.array([_fk(model, i, *q[3 * i:3 * i + 3].tolist()) for i in range(N_LEGS)])


def leg_jacobian(model: RobotModel, leg: int, q_leg) -> np.ndarray:
    _check_leg(leg)
    a, h, k = (float(v) for v in q_leg)
    return np.array(_fk_jac(model, leg, a, h, k)[1]).reshape(3, 3)


def ik_velocity(model: RobotModel, leg: int, q_leg, e, mu: float = 1e-6) -> np.ndarray:
    """Damped least-squares joint step for foot displacement ``e``.

    Solves (J^T J + mu I) dq = J^T e. With mu = 0 and a full-rank J this is
    the pseudo-inverse solution.
    """
    _check_leg(leg)
    a, h, k = (float(v) for v in q_leg)
    ex, ey, ez = (float(v) for v in e)
    if ex == ey == ez == 0.0:
        return np.zeros(3)
    jac = _fk_jac(model, leg, a, h, k)[1]
    return np.array(_dls_step(jac, ex, ey, ez, mu))


@dataclass(frozen=True)
class IkResult:
    q: np.ndarray
    converged: bool
    iterations: int
    error: float


def ik_dls(model: RobotModel, leg: int, x_des, q_init, params: IkParams | None = None) -> IkResult:
    """Iterate q <- clamp(q + lam * dq) until the foot error drops below tolerance.

    Joints held at a limit are excluded from the step they push against, and
    a single step is capped at ``params.max_step`` radians.
    """
    _check_leg(leg)
    p = params or IkParams()
    tx, ty, tz = (float(v) for v in x_des)
    q0, q1, q2 = (float(v) for v in q_init)
    a, h, k, ok, n, err = _ik(model, leg, tx, ty, tz, q0, q1, q2,
                              p.lam, p.tolerance, p.max_iterations, p.mu, p.max_step)
    return IkResult(np.array([a, h, k]), ok, n, err)


def nominal_joint_angles(model: RobotModel) -> np.ndarray:
    """Standing configuration: each foot straight below its hip."""
    q = np.zeros(N_JOINTS)
    seed = (0.0, 0.8, -1.6)
    for leg in range(N_LEGS):
        hx, hy, hz = model.hip_offsets[leg]
        res = ik_dls(model, leg, (hx, hy, hz - model.standing_height), seed,
                     IkParams(tolerance=1e-12, max_iterations=100))
        q[3 * leg:3 * leg + 3] = res.q
    return q


def _check_leg(leg: int):
    if not 0 <= leg < N_LEGS:
        raise IndexError(f"leg index {leg} out of range 0..3")
