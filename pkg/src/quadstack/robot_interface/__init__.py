from .calibration import (DEFAULT_AMPLITUDE, RESOLUTION, SPACING, WINDOW, CalibrationResult,
                          CalibrationTimeout, EncoderModel, apply_index_offsets, parse_offsets,
                          random_encoders, soft_calibrate, suggested_offsets, sweep_reference)
from .packets import (MODE_NAMES, MODE_ONBOARD_PD, MODE_TAGS, MODE_TORQUE, CommandPacket, CrcError,
                      LengthError, ModeError, PacketError, SensorPacket, SequenceChecker, decode_command,
                      decode_sensor, encode_command, encode_sensor)
from .state_machine import Event, IllegalTransition, InterfaceState, State, legal_transitions, state_machine_step
from .timing import DEADLINE_US, TimingMonitor, TimingStats

__all__ = [
    "CalibrationResult", "CalibrationTimeout", "CommandPacket", "CrcError", "DEADLINE_US",
    "DEFAULT_AMPLITUDE", "EncoderModel", "Event", "IllegalTransition", "InterfaceState", "LengthError",
    "MODE_NAMES", "MODE_ONBOARD_PD", "MODE_TAGS", "MODE_TORQUE", "ModeError", "PacketError", "RESOLUTION",
    "SPACING", "SensorPacket", "SequenceChecker", "State", "TimingMonitor", "TimingStats", "WINDOW",
    "apply_index_offsets", "decode_command", "decode_sensor", "encode_command", "encode_sensor",
    "legal_transitions", "parse_offsets", "random_encoders", "soft_calibrate", "state_machine_step",
    "suggested_offsets", "sweep_reference",
]
