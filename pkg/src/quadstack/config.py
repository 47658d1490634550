"""Run configuration: JSON file + command-line overrides.

Schema (every key optional)::

    {
      "map": "path/to/terrain.map",      # or "task" + "seed", never both
      "task": "walking", "seed": 0,
      "start": [0.5, 1.5], "goal": [2.5, 1.5],
      "cycle_duration": 2.0, "duty_factor": 0.6, "phase_offsets": [0.15, 0.55, 0.55, 0.15],
      "full_stance_fraction": 0.15, "step_height": 0.05,
      "kp": 3.0, "kd": 0.05,
      "ik_lambda": 1.0, "ik_tolerance": 1e-7, "ik_max_iterations": 50,
      "threshold": 0.1, "probe_length": 0.15, "clearance": 0.3, "step_size": 0.3,
      "time_limit": 60.0, "goal_radius": 0.15, "fss_workers": 1,
      "mode": "onboard_pd", "out": "."
    }

Values resolve as flag > file > default.  ``out`` defaults to the
``QUADSTACK_OUT`` environment variable when set.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import asdict, dataclass, fields, replace

from .robot_interface.packets import MODE_TAGS
from .terrain import TASKS

OUT_ENV = "QUADSTACK_OUT"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    map: str | None = None
    task: str | None = None
    seed: int = 0
    start: tuple | None = None
    goal: tuple | None = None
    cycle_duration: float = 2.0
    duty_factor: float = 0.6
    phase_offsets: tuple = (0.15, 0.55, 0.55, 0.15)
    full_stance_fraction: float = 0.15
    step_height: float = 0.05
    kp: float = 3.0
    kd: float = 0.05
    ik_lambda: float = 1.0
    ik_tolerance: float = 1e-7
    ik_max_iterations: int = 50
    threshold: float = 0.1
    probe_length: float = 0.15
    clearance: float = 0.3
    step_size: float = 0.3
    time_limit: float = 60.0
    goal_radius: float = 0.15
    fss_workers: int = 1
    mode: str = "onboard_pd"
    out: str = "."

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True) + "\n"


KEYS = tuple(f.name for f in fields(RunConfig))
_TYPES = {
    "map": str, "task": str, "mode": str, "out": str,
    "seed": int, "ik_max_iterations": int, "fss_workers": int,
    "start": "xy", "goal": "xy", "phase_offsets": "vec4",
}


def default_config() -> RunConfig:
    return RunConfig(out=os.environ.get(OUT_ENV, "."))


def _line_of(text: str, key: str) -> int:
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else 0


def _coerce(key: str, value, where: str):
    kind = _TYPES.get(key, float)
    try:
        if value is None and key in ("map", "task", "start", "goal"):
            return None
        if kind == "xy" or kind == "vec4":
            n = 2 if kind == "xy" else 4
            if not isinstance(value, (list, tuple)) or len(value) != n:
                raise TypeError
            return tuple(float(v) for v in value)
        if kind is int:
            if isinstance(value, bool) or not float(value).is_integer():
                raise TypeError
            return int(value)
        if kind is str:
            if not isinstance(value, str):
                raise TypeError
            return value
        if isinstance(value, bool):
            raise TypeError
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: bad value for {key!r}: {value!r}") from None


def parse_config(text: str, source: str = "<config>") -> dict:
    """Validated key/value overrides from JSON text (empty text means none)."""
    if not text.strip():
        return {}
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}:1: top level must be a JSON object")
    out = {}
    for key, value in data.items():
        where = f"{source}:{_line_of(text, key)}"
        if key not in KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        out[key] = _coerce(key, value, where)
    if out.get("map") is not None and out.get("task") is not None:
        raise ConfigError(f"{source}: conflicting keys 'map' and 'task'; give one")
    return out


def load_config(path) -> RunConfig:
    """Defaults with the file's values applied; the file must exist."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return validate(replace(default_config(), **parse_config(text, str(path))))


def merge(base: RunConfig, overrides: dict) -> RunConfig:
    """Apply non-None flag values on top of ``base``."""
    vals = {k: _coerce(k, v, "flag") for k, v in overrides.items() if v is not None}
    unknown = set(vals) - set(KEYS)
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r}")
    # a source given on the command line replaces the file's source
    if "map" in vals:
        base = replace(base, task=None)
    if "task" in vals:
        base = replace(base, map=None)
    return validate(replace(base, **vals))


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.map is not None and cfg.task is not None:
        raise ConfigError("conflicting sources: give either a map path or a task, not both")
    if cfg.task is not None and cfg.task not in TASKS:
        raise ConfigError(f"unknown task {cfg.task!r}; expected one of {', '.join(TASKS)}")
    if cfg.mode not in MODE_TAGS:
        raise ConfigError(f"unknown mode {cfg.mode!r}; expected one of {', '.join(MODE_TAGS)}")
    for key in ("time_limit", "cycle_duration", "step_size", "goal_radius", "ik_tolerance", "ik_lambda"):
        if not getattr(cfg, key) > 0:
            raise ConfigError(f"{key} must be positive")
    if cfg.fss_workers < 1:
        raise ConfigError("fss_workers must be at least 1")
    return cfg


def resolve(config_path=None, flags: dict | None = None) -> RunConfig:
    """flag > file > default."""
    base = load_config(config_path) if config_path else default_config()
    return merge(base, flags or {})


__all__ = ["ConfigError", "KEYS", "OUT_ENV", "RunConfig", "default_config", "load_config", "merge",
           "parse_config", "resolve", "validate"]
