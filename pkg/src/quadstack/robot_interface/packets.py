"""Binary command / sensor frames.

Layout (little-endian throughout)::

    command, mode 1 (onboard PD):  u8 mode | u32 seq | f32 q_ref[12] | f32 dq_ref[12]
                                   | f32 kp[12] | f32 kd[12] | u32 crc     -> 201 bytes
    command, mode 2 (torque):      u8 mode | u32 seq | f32 tau[12] | u32 crc  -> 57 bytes
    sensor:                        u32 seq | f32 q[12] | f32 dq[12] | f32 imu_rates[3]
                                   | u32 crc                                -> 116 bytes

The CRC is zlib's CRC-32 over every preceding byte of the frame.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

MODE_ONBOARD_PD = 1
MODE_TORQUE = 2
MODE_NAMES = {MODE_ONBOARD_PD: "onboard_pd", MODE_TORQUE: "torque"}
MODE_TAGS = {v: k for k, v in MODE_NAMES.items()}

_PD_BODY = struct.Struct("<BI48f")
_TORQUE_BODY = struct.Struct("<BI12f")
_SENSOR_BODY = struct.Struct("<I27f")
_CRC = struct.Struct("<I")

COMMAND_SIZES = {MODE_ONBOARD_PD: _PD_BODY.size + 4, MODE_TORQUE: _TORQUE_BODY.size + 4}
SENSOR_SIZE = _SENSOR_BODY.size + 4


class PacketError(ValueError):
    pass


class CrcError(PacketError):
    pass


class LengthError(PacketError):
    pass


class ModeError(PacketError):
    pass


def _f32(values, n=12) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float32).reshape(-1)
    if arr.shape != (n,):
        raise PacketError(f"expected {n} values, got {arr.size}")
    return arr


@dataclass(eq=False)
class CommandPacket:
    """One controller tick worth of commands.

    In onboard-PD mode ``q_ref``, ``dq_ref``, ``kp`` and ``kd`` are used; in
    torque mode only ``tau``.  Values are stored as float32, as on the wire.
    """

    mode: int
    seq: int
    q_ref: np.ndarray = field(default_factory=lambda: np.zeros(12, np.float32))
    dq_ref: np.ndarray = field(default_factory=lambda: np.zeros(12, np.float32))
    kp: np.ndarray = field(default_factory=lambda: np.zeros(12, np.float32))
    kd: np.ndarray = field(default_factory=lambda: np.zeros(12, np.float32))
    tau: np.ndarray = field(default_factory=lambda: np.zeros(12, np.float32))

    def __post_init__(self):
        if self.mode not in MODE_NAMES:
            raise ModeError(f"unknown mode tag {self.mode}")
        if not 0 <= self.seq < 2 ** 32:
            raise PacketError("sequence number must fit in 32 bits")
        for name in ("q_ref", "dq_ref", "kp", "kd", "tau"):
            setattr(self, name, _f32(getattr(self, name)))

    def __eq__(self, other):
        if not isinstance(other, CommandPacket):
            return NotImplemented
        if (self.mode, self.seq) != (other.mode, other.seq):
            return False
        names = ("q_ref", "dq_ref", "kp", "kd") if self.mode == MODE_ONBOARD_PD else ("tau",)
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in names)


@dataclass(eq=False)
class SensorPacket:
    seq: int
    q: np.ndarray
    dq: np.ndarray
    imu_rates: np.ndarray

    def __post_init__(self):
        if not 0 <= self.seq < 2 ** 32:
            raise PacketError("sequence number must fit in 32 bits")
        self.q = _f32(self.q)
        self.dq = _f32(self.dq)
        self.imu_rates = _f32(self.imu_rates, 3)

    def __eq__(self, other):
        if not isinstance(other, SensorPacket):
            return NotImplemented
        return self.seq == other.seq and np.array_equal(self.q, other.q) \
            and np.array_equal(self.dq, other.dq) and np.array_equal(self.imu_rates, other.imu_rates)


def _seal(body: bytes) -> bytes:
    return body + _CRC.pack(zlib.crc32(body))


def _open(frame: bytes, size: int) -> bytes:
    if len(frame) != size:
        raise LengthError(f"frame is {len(frame)} bytes, expected {size}")
    body, (crc,) = frame[:-4], _CRC.unpack(frame[-4:])
    if zlib.crc32(body) != crc:
        raise CrcError("CRC mismatch")
    return body


def encode_command(packet: CommandPacket) -> bytes:
    if packet.mode == MODE_ONBOARD_PD:
        body = _PD_BODY.pack(packet.mode, packet.seq, *packet.q_ref, *packet.dq_ref, *packet.kp, *packet.kd)
    else:
        body = _TORQUE_BODY.pack(packet.mode, packet.seq, *packet.tau)
    return _seal(body)


def decode_command(frame: bytes) -> CommandPacket:
    if len(frame) < 1:
        raise LengthError("empty frame")
    mode = frame[0]
    if mode not in COMMAND_SIZES:
        raise ModeError(f"unknown mode tag {mode}")
    body = _open(frame, COMMAND_SIZES[mode])
    if mode == MODE_ONBOARD_PD:
        _, seq, *vals = _PD_BODY.unpack(body)
        return CommandPacket(mode, seq, vals[0:12], vals[12:24], vals[24:36], vals[36:48])
    _, seq, *vals = _TORQUE_BODY.unpack(body)
    return CommandPacket(mode, seq, tau=vals)


def encode_sensor(packet: SensorPacket) -> bytes:
    return _seal(_SENSOR_BODY.pack(packet.seq, *packet.q, *packet.dq, *packet.imu_rates))


def decode_sensor(frame: bytes) -> SensorPacket:
    body = _open(frame, SENSOR_SIZE)
    seq, *vals = _SENSOR_BODY.unpack(body)
    return SensorPacket(seq, vals[0:12], vals[12:24], vals[24:27])


class SequenceChecker:
    """Rejects frames whose sequence number does not increase."""

    def __init__(self):
        self.last = None

    def accept(self, seq: int) -> bool:
        if self.last is not None and seq <= self.last:
            return False
        self.last = seq
        return True
