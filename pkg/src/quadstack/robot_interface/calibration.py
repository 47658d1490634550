"""Simulated joint encoders and index-pulse calibration.

Each joint sees an index pulse every ``2*pi/9`` rad of joint travel (one per
motor turn through the 9:1 gearbox).  The pulses sit half a spacing past
the reference zero and at every spacing after that, so a sweep in the
positive axis direction that starts within ``pi/9`` of the zero always
meets the pulse at ``zero + pi/9`` first.  Starting further out lands on a
neighbouring pulse and the recovered zero is off by whole spacings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..kinematics import N_JOINTS

REDUCTION = 9
SPACING = 2.0 * math.pi / REDUCTION
WINDOW = math.pi / REDUCTION
COUNTS_PER_MOTOR_REV = 20000
RESOLUTION = SPACING / COUNTS_PER_MOTOR_REV
MIN_SWEEP_SEED = 0.01
DEFAULT_AMPLITUDE = 4.0


class CalibrationTimeout(RuntimeError):
    def __init__(self, joint: int, max_time: float):
        super().__init__(f"joint {joint}: no index pulse within {max_time:g} s of sweeping")
        self.joint = joint


def sweep_reference(q: float, amplitude: float, t: float, sign: int = 1) -> float:
    """Sweep displacement ``9 q (A - A cos 2 pi t)`` in direction ``sign``; period 1 s."""
    return REDUCTION * q * (amplitude - amplitude * math.cos(2.0 * math.pi * t)) * sign


@dataclass(frozen=True)
class EncoderModel:
    """Hidden truth for the simulated encoders.

    ``true_zero`` and ``power_on`` are absolute joint angles; the encoder
    itself only reports travel since power-on, quantised to ``resolution``.
    """

    true_zero: np.ndarray
    power_on: np.ndarray
    axis_sign: tuple = (1,) * N_JOINTS
    resolution: float = RESOLUTION

    def __post_init__(self):
        for name in ("true_zero", "power_on"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (N_JOINTS,) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} needs 12 finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if len(self.axis_sign) != N_JOINTS or any(s not in (1, -1) for s in self.axis_sign):
            raise ValueError("axis signs must be 12 values of +1 or -1")

    @property
    def spacing(self) -> float:
        return SPACING

    def first_pulse_travel(self, joint: int) -> float:
        """Travel from power-on to the first pulse in the sweep direction."""
        s = self.axis_sign[joint]
        # pulses at zero + s * (WINDOW + k * SPACING); work in the sweep direction
        rel = s * (self.power_on[joint] - self.true_zero[joint]) - WINDOW
        k = math.floor(rel / SPACING) + 1
        return k * SPACING - rel


def random_encoders(seed: int, offset_range: float = WINDOW * (1 - 1e-9),
                    zero_range: float = math.pi, axis_sign=None) -> EncoderModel:
    """Random hidden zeros with power-on angles in (-offset_range, offset_range) around them."""
    rng = np.random.default_rng(seed)
    zeros = rng.uniform(-zero_range, zero_range, N_JOINTS)
    offsets = rng.uniform(-offset_range, offset_range, N_JOINTS)
    signs = tuple(axis_sign) if axis_sign is not None else tuple(int(s) for s in rng.choice([-1, 1], N_JOINTS))
    return EncoderModel(zeros, zeros + offsets, signs)


@dataclass(frozen=True)
class CalibrationResult:
    """Recovered zeros as absolute angles, with the truth kept for status checks."""

    found_index: np.ndarray       # encoder reading (travel since power-on) at the detected pulse
    zero: np.ndarray              # recovered absolute zero per joint
    applied_offsets: tuple
    encoders: EncoderModel = field(repr=False)

    @property
    def pulse_error(self) -> np.ndarray:
        """Zero error per joint in whole pulse spacings."""
        return np.rint((self.zero - self.encoders.true_zero) / SPACING).astype(int)

    @property
    def misaligned(self) -> tuple:
        return tuple(int(j) for j in np.nonzero(self.pulse_error)[0])

    @property
    def status(self) -> str:
        bad = self.misaligned
        return "ok" if not bad else "misaligned(" + ",".join(str(j) for j in bad) + ")"

    @property
    def ok(self) -> bool:
        return not self.misaligned


def soft_calibrate(encoders: EncoderModel, amplitude: float = DEFAULT_AMPLITUDE, max_time: float = 2.0,
                   dt: float = 1e-3, min_seed: float = MIN_SWEEP_SEED) -> CalibrationResult:
    """Sweep each joint from its power-on angle until an index pulse fires.

    The sweep amplitude scale is the power-on reading with a floor of
    ``min_seed``, since the sweep formula stays at zero for a zero seed.
    """
    n_steps = int(round(max_time / dt))
    t = np.arange(n_steps + 1) * dt
    found = np.zeros(N_JOINTS)
    zero = np.zeros(N_JOINTS)
    res = encoders.resolution
    for j in range(N_JOINTS):
        s = encoders.axis_sign[j]
        seed = max(abs(float(encoders.power_on[j])), min_seed)
        travel = REDUCTION * seed * (amplitude - amplitude * np.cos(2.0 * np.pi * t))
        target = encoders.first_pulse_travel(j)
        hit = np.nonzero(travel >= target)[0]
        if len(hit) == 0 or amplitude <= 0:
            raise CalibrationTimeout(j, max_time)
        # the pulse latches the encoder count at the moment it passes
        counts = math.floor(target / res + 1e-9)
        found[j] = s * counts * res
        zero[j] = encoders.power_on[j] + found[j] - s * WINDOW
    return CalibrationResult(found, zero, (0,) * N_JOINTS, encoders)


def apply_index_offsets(result: CalibrationResult, offsets) -> CalibrationResult:
    """Shift each joint zero by a whole number of pulse spacings."""
    offsets = tuple(int(o) for o in offsets)
    if len(offsets) != N_JOINTS:
        raise ValueError("need 12 index offsets")
    zero = result.zero + np.array(offsets) * SPACING
    applied = tuple(a + o for a, o in zip(result.applied_offsets, offsets))
    return replace(result, zero=zero, applied_offsets=applied)


def suggested_offsets(result: CalibrationResult) -> tuple:
    """Offsets that cancel the known pulse error (needs the simulated truth)."""
    return tuple(int(-e) for e in result.pulse_error)


def parse_offsets(text: str) -> tuple:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if len(parts) != N_JOINTS:
        raise ValueError(f"expected 12 comma-separated integers, got {len(parts)}")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise ValueError(f"index offsets must be integers: {text!r}") from None
