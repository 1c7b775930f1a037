"""Run configuration: documented key=value text file plus flag overrides."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .simulator import MotionConfig, NoiseModel, SensorConfig


class ConfigError(ValueError):
    pass


# sensor presets: horizontal FOV from the two benchmark camera setups, with
# vertical FOV fixed by the frame aspect (4:3 and 1:1)
PRESETS = {
    "loco": dict(fov_h=math.radians(56.0), fov_v=math.radians(42.0)),
    "mon": dict(fov_h=math.radians(79.0), fov_v=math.radians(79.0)),
}

AGENTS = ("hybrid", "random", "frontier_greedy", "oracle", "explore")
POLICY_NAMES = ("nearest_frontier", "info_gain", "uniform")
NOISE_PRESETS = ("off", "default")


@dataclass
class RunConfig:
    preset: str = "loco"
    agent: str = "hybrid"
    policy: str = "nearest_frontier"
    noise: str = "off"
    seed: int = 0
    step_budget: int = -1          # -1: inherit each episode's own budget
    egomap_side: int = 128
    n_beams: int = 60
    max_range: float = 3.0
    map_threshold: float = 0.007   # pixel fraction to enter the semantic cloud
    found_trigger: float = 0.05    # pixel fraction to call Found
    forward_step: float = 0.25
    turn_angle_deg: float = 30.0
    robot_radius: float = 0.18
    found_radius: float = 1.0
    subgoal_spacing: float = 0.3
    subgoal_limit: int = 5
    tau: float = 1.0               # m, nearest-frontier distance decay
    disk_radius: float = 1.0       # m, info-gain neighborhood
    workers: int = 1
    out: str = "runs/out"

    def validate(self) -> "RunConfig":
        if self.preset not in PRESETS:
            raise ConfigError(f"preset: unknown value {self.preset!r}, "
                              f"expected one of {sorted(PRESETS)}")
        if self.agent not in AGENTS:
            raise ConfigError(f"agent: unknown value {self.agent!r}, "
                              f"expected one of {sorted(AGENTS)}")
        if self.policy not in POLICY_NAMES:
            raise ConfigError(f"policy: unknown value {self.policy!r}, "
                              f"expected one of {sorted(POLICY_NAMES)}")
        if self.noise not in NOISE_PRESETS:
            raise ConfigError(f"noise: unknown value {self.noise!r}, "
                              f"expected one of {sorted(NOISE_PRESETS)}")
        for name in ("egomap_side", "n_beams", "subgoal_limit", "workers"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name}: must be positive")
        for name in ("max_range", "forward_step", "turn_angle_deg", "robot_radius",
                     "found_radius", "subgoal_spacing", "tau", "disk_radius"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name}: must be positive")
        for name in ("map_threshold", "found_trigger"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name}: must be in (0, 1)")
        return self

    # -- derived pieces ------------------------------------------------------

    def sensor(self) -> SensorConfig:
        p = PRESETS[self.preset]
        return SensorConfig(fov_h=p["fov_h"], fov_v=p["fov_v"],
                            n_beams=self.n_beams, max_range=self.max_range)

    def motion(self) -> MotionConfig:
        return MotionConfig(forward_step=self.forward_step,
                            turn_angle=math.radians(self.turn_angle_deg),
                            robot_radius=self.robot_radius,
                            found_radius=self.found_radius)

    def noise_model(self) -> NoiseModel:
        return NoiseModel.default() if self.noise == "default" else NoiseModel()

    # -- text round trip -------------------------------------------------------

    def to_text(self) -> str:
        lines = ["# multinav run configuration (effective values)"]
        for f in fields(self):
            lines.append(f"{f.name}={_fmt(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_INT_FIELDS = {f.name for f in fields(RunConfig) if f.type == "int"}
_FLOAT_FIELDS = {f.name for f in fields(RunConfig) if f.type == "float"}


def parse_config_text(text: str) -> dict:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{key}: unknown configuration key")
        values[key] = _convert(key, val)
    return values


def _convert(key: str, val: str):
    try:
        if key in _INT_FIELDS:
            return int(val)
        if key in _FLOAT_FIELDS:
            return float(val)
        return val
    except ValueError as e:
        raise ConfigError(f"{key}: cannot parse {val!r}") from e


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Config file values first, then flag overrides; flags win."""
    values: dict = {}
    if path is not None:
        with open(path, "r", encoding="ascii") as f:
            values.update(parse_config_text(f.read()))
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{key}: unknown configuration key")
        values[key] = _convert(key, str(val))
    return RunConfig(**values).validate()
