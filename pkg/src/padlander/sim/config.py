"""Simulator configuration: arena, airframe, control gains, episodes, noise.

Everything is a plain dataclass so it can be built in code or loaded from a
TOML file whose tables mirror the field names::

    [arena]
    extent_x = 40.0

    [episode]
    altitude_range = [2.0, 20.0]
    path_kinds = ["linear", "circular"]
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Tuple

from ..geometry import CameraModel


class ConfigError(ValueError):
    pass


@dataclass
class ArenaConfig:
    extent_x: float = 40.0
    extent_y: float = 40.0
    ceiling: float = 30.0
    physics_dt: float = 1.0 / 240.0
    control_fps: float = 8.0

    @property
    def control_period(self) -> float:
        return 1.0 / self.control_fps

    @property
    def substeps(self) -> int:
        return int(round(self.control_period / self.physics_dt))

    def validate(self):
        if min(self.extent_x, self.extent_y, self.ceiling) <= 0:
            raise ConfigError("arena extents and ceiling must be positive")
        if self.physics_dt <= 0 or self.control_fps <= 0:
            raise ConfigError("physics_dt and control_fps must be positive")
        n = self.control_period / self.physics_dt
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ConfigError(f"physics_dt {self.physics_dt} does not divide control period {self.control_period}")


@dataclass
class AirframeConfig:
    """Mavic-class quadrotor in X configuration."""

    mass: float = 0.43
    arm_length: float = 0.107
    ixx: float = 2.8e-3
    iyy: float = 2.8e-3
    izz: float = 5.0e-3
    max_thrust: float = 2.6  # per motor, N
    yaw_coefficient: float = 0.016  # reaction torque per newton of thrust, m
    lateral_drag: float = 0.6  # 1/s, rotor drag acts in the horizontal plane only
    gravity: float = 9.81


@dataclass
class GainConfig:
    attitude_kp: float = 400.0
    attitude_kd: float = 32.0
    attitude_ki: float = 10.0
    yaw_rate_kp: float = 4.0
    yaw_rate_ki: float = 0.5
    climb_kp: float = 4.0
    climb_ki: float = 1.0
    integrator_limit: float = 0.5


@dataclass
class ControlMapping:
    """How a normalized action becomes stabilizer setpoints."""

    max_tilt: float = 20.0  # deg
    max_yaw_rate: float = 90.0  # deg/s
    max_climb_rate: float = 1.5  # m/s
    speed_cap: float = 0.4  # m/s horizontal ground speed
    gimbal_slew: float = 90.0  # deg/s


@dataclass
class PlatformGeometry:
    platform_size: float = 1.0
    target_size: float = 0.6
    top_height: float = 0.2  # platform surface above ground, m
    contact_threshold: float = 0.05


@dataclass
class NoiseSpec:
    pixel_sigma: float = 2.0
    p_miss: float = 0.02


@dataclass
class WindSpec:
    enabled: bool = False
    max_force: float = 0.2  # N, resampled every control step


@dataclass
class EpisodeSpec:
    altitude_range: Tuple[float, float] = (2.0, 20.0)
    spawn_offset_max: float = 3.0  # horizontal UAV↔platform distance at spawn, m
    spawn_bearing_max: float = 30.0  # platform bearing off the UAV nose at spawn, deg
    platform_speed_range: Tuple[float, float] = (0.0, 1.0)
    path_kinds: Tuple[str, ...] = ("linear", "circular", "waypoint")
    circle_radius_range: Tuple[float, float] = (2.0, 6.0)
    max_duration: float = 90.0

    def validate(self):
        lo, hi = self.altitude_range
        if not 0 < lo <= hi:
            raise ConfigError(f"bad altitude range {self.altitude_range}")
        slo, shi = self.platform_speed_range
        if not 0 <= slo <= shi:
            raise ConfigError(f"bad platform speed range {self.platform_speed_range}")
        for kind in self.path_kinds:
            if kind not in ("linear", "circular", "waypoint"):
                raise ConfigError(f"unknown path kind {kind!r}")
        if not self.path_kinds:
            raise ConfigError("at least one path kind is required")
        if self.max_duration <= 0:
            raise ConfigError("max_duration must be positive")


@dataclass
class SimConfig:
    arena: ArenaConfig = field(default_factory=ArenaConfig)
    airframe: AirframeConfig = field(default_factory=AirframeConfig)
    gains: GainConfig = field(default_factory=GainConfig)
    control: ControlMapping = field(default_factory=ControlMapping)
    platform: PlatformGeometry = field(default_factory=PlatformGeometry)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    wind: WindSpec = field(default_factory=WindSpec)
    episode: EpisodeSpec = field(default_factory=EpisodeSpec)
    camera: CameraModel = field(default_factory=CameraModel)

    def spawn_margin(self) -> float:
        """Clearance between the platform spawn region and the arena walls."""
        ep = self.episode
        return ep.spawn_offset_max + self.platform.platform_size + max(ep.circle_radius_range) * ("circular" in ep.path_kinds)

    def validate(self) -> "SimConfig":
        self.arena.validate()
        self.episode.validate()
        if self.episode.altitude_range[1] + self.platform.top_height >= self.arena.ceiling:
            raise ConfigError("spawn altitude reaches the arena ceiling")
        margin = self.spawn_margin()
        if 2 * margin >= min(self.arena.extent_x, self.arena.extent_y):
            raise ConfigError(
                f"arena {self.arena.extent_x}x{self.arena.extent_y} m too small for spawn radius "
                f"(needs > {2 * margin:.2f} m per side)"
            )
        return self


def _build(cls, data: Mapping[str, Any]):
    if not isinstance(data, Mapping):
        raise ConfigError(f"expected a table for {cls.__name__}, got {type(data).__name__}")
    hints = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in hints:
            raise ConfigError(f"unknown field {cls.__name__}.{key}")
        default = getattr(cls(), key) if cls is not CameraModel else None
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value)
        elif isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: Mapping[str, Any]) -> SimConfig:
    data = dict(data)
    cam = data.pop("camera", None)
    cfg = _build(SimConfig, data)
    if cam is not None:
        cfg.camera = _build(CameraModel, cam)
    return cfg.validate()


def config_to_dict(cfg) -> dict:
    def conv(obj):
        if dataclasses.is_dataclass(obj):
            return {f.name: conv(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        if isinstance(obj, tuple):
            return list(obj)
        return obj

    return conv(cfg)


def load_toml(path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib

    with open(Path(path), "rb") as fh:
        return tomllib.load(fh)


def load_sim_config(path) -> SimConfig:
    data = load_toml(path)
    return config_from_dict(data.get("sim", data))

