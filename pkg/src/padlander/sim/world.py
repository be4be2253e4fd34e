"""The simulated world: one quadrotor, one moving platform, one camera."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Optional, Tuple

import numpy as np

from ..geometry import BoundingBox
from . import dynamics as dyn
from .config import ConfigError, SimConfig
from .detection import gimbal_track, render_detection
from .platform import PathSpec, PlatformState, circle_start, platform_update, sample_waypoint

TERMINAL_NONE = "none"
TERMINAL_LANDING = "landing"
TERMINAL_CRASH = "crash"
TERMINAL_TIMEOUT = "timeout"

_CONTACT_NAMES = {
    dyn.TOUCHDOWN_PLATFORM: "platform",
    dyn.TOUCHDOWN_GROUND: "ground",
    dyn.TILT_CRASH: "tilt",
    dyn.WALL_CRASH: "wall",
}


@dataclass(frozen=True)
class UavBody:
    position: Tuple[float, float, float]
    velocity: Tuple[float, float, float]
    attitude: Tuple[float, float, float]  # roll, pitch, yaw in degrees
    angular_velocity: Tuple[float, float, float]  # deg/s
    motor_forces: Tuple[float, float, float, float]
    gimbal_pitch: float
    mass: float
    arm_length: float


@dataclass
class SimState:
    """Snapshot of everything the simulator evolves.

    ``x`` is the flat dynamics vector (see :mod:`padlander.sim.dynamics`).
    """

    t: float
    step_index: int
    x: np.ndarray
    gimbal_pitch: float
    platform: PlatformState
    terminal: str = TERMINAL_NONE

    def uav(self, mass: float = 0.43, arm_length: float = 0.107) -> UavBody:
        x = self.x
        return UavBody(
            position=tuple(x[dyn.PX:dyn.PZ + 1]),
            velocity=tuple(x[dyn.VX:dyn.VZ + 1]),
            attitude=tuple(math.degrees(a) for a in x[dyn.ROLL:dyn.YAW + 1]),
            angular_velocity=tuple(math.degrees(w) for w in x[dyn.WX:dyn.WZ + 1]),
            motor_forces=tuple(x[dyn.F0:dyn.F0 + 4]),
            gimbal_pitch=self.gimbal_pitch,
            mass=mass,
            arm_length=arm_length,
        )

    def key(self) -> tuple:
        """Hashable, bit-exact identity of the state."""
        p = self.platform
        return (self.t, self.step_index, self.x.tobytes(), self.gimbal_pitch,
                p.x, p.y, p.heading, p.speed, p.phase, p.waypoint, self.terminal)


@dataclass(frozen=True)
class RelativePose:
    """Ground-truth UAV↔platform relation. Feeds rewards and oracles, never the policy."""

    forward: float  # platform position along the UAV heading, m
    right: float  # platform position to the UAV's right, m
    height: float  # UAV height above the platform surface, m
    heading_error: float  # |bearing of the platform off the UAV nose|, deg in [0, 180]
    horizontal_distance: float
    offset_along: float  # UAV offset from the platform center in the platform frame, m
    offset_across: float

    def inside(self, half_size: float) -> bool:
        return abs(self.offset_along) <= half_size and abs(self.offset_across) <= half_size


@dataclass
class StepResult:
    state: SimState
    detection: Optional[BoundingBox]
    terminal: str
    ground_truth: RelativePose
    contact: Optional[str] = None  # platform | ground | tilt | wall
    inside_target: bool = False
    descent_speed: float = 0.0  # m/s at touchdown

    def summary(self) -> dict:
        s = self.state
        x = s.x
        det = self.detection
        return {
            "t": s.t,
            "step": s.step_index,
            "uav": [float(v) for v in x[dyn.PX:dyn.PZ + 1]],
            "vel": [float(v) for v in x[dyn.VX:dyn.VZ + 1]],
            "att_deg": [math.degrees(a) for a in x[dyn.ROLL:dyn.YAW + 1]],
            "gimbal": s.gimbal_pitch,
            "platform": [s.platform.x, s.platform.y, s.platform.heading, s.platform.speed],
            "bbox": None if det is None else [det.xmin, det.ymin, det.xmax, det.ymax],
            "terminal": self.terminal,
            "contact": self.contact,
            "inside_target": self.inside_target,
            "offset": [self.ground_truth.offset_along, self.ground_truth.offset_across],
        }


def relative_pose(x: np.ndarray, plat: PlatformState, platform_top: float) -> RelativePose:
    yaw = x[dyn.YAW]
    dx = plat.x - x[dyn.PX]
    dy = plat.y - x[dyn.PY]
    c, s = math.cos(yaw), math.sin(yaw)
    fwd = c * dx + s * dy
    right = s * dx - c * dy
    bearing = math.degrees(math.atan2(right, fwd))
    h = math.radians(plat.heading)
    ch, sh = math.cos(h), math.sin(h)
    along = ch * -dx + sh * -dy
    across = -sh * -dx + ch * -dy
    return RelativePose(float(fwd), float(right), float(x[dyn.PZ] - platform_top), abs(float(bearing)),
                        float(math.hypot(dx, dy)), float(along), float(across))


class SimWorld:
    """Deterministic quadrotor + moving platform world.

    Example:
        >>> world = SimWorld(SimConfig())
        >>> state = world.reset(seed=3)
        >>> result = world.step((0.0, 0.0, 0.0, 0.0))
    """

    def __init__(self, config: Optional[SimConfig] = None):
        self.config = (config or SimConfig()).validate()
        cfg = self.config
        self._params = dyn.pack_params(
            cfg.airframe, cfg.gains, cfg.control,
            platform_half=cfg.platform.platform_size / 2,
            platform_top=cfg.platform.top_height,
            contact=cfg.platform.contact_threshold,
            extent_x=cfg.arena.extent_x, extent_y=cfg.arena.extent_y, ceiling=cfg.arena.ceiling,
        )
        self._forces = np.zeros(4)
        self._info = np.zeros(3)
        self._setpoint = np.zeros(4)
        self._wind = np.zeros(2)
        self.rng: Optional[np.random.Generator] = None
        self.state: Optional[SimState] = None
        self.motors_on = True

    # -- episode setup -------------------------------------------------------------
    def reset(self, seed: int, *, altitude: Optional[float] = None, platform_speed: Optional[float] = None,
              path_kind: Optional[str] = None) -> SimState:
        """Spawn a new episode. The optional overrides pin individual draws.

        All random draws happen regardless of overrides so the rest of the
        episode does not depend on which fields were pinned.
        """
        cfg = self.config
        ep = cfg.episode
        rng = np.random.default_rng(seed)
        self.rng = rng
        draws = rng.random(8)
        lo, hi = ep.altitude_range
        h = lo + (hi - lo) * draws[0]
        if altitude is not None:
            h = float(altitude)
        yaw = -math.pi + 2 * math.pi * draws[1]
        rho = ep.spawn_offset_max * math.sqrt(draws[2])
        beta = math.radians(ep.spawn_bearing_max) * (2 * draws[3] - 1)
        slo, shi = ep.platform_speed_range
        speed = slo + (shi - slo) * draws[4]
        if platform_speed is not None:
            # a pinned speed holds for the whole episode, including waypoint resamples
            speed = float(platform_speed)
            slo = shi = speed
        kind = ep.path_kinds[min(int(draws[5] * len(ep.path_kinds)), len(ep.path_kinds) - 1)]
        if path_kind is not None:
            kind = path_kind
        plat_heading = 360.0 * draws[6]

        margin = cfg.spawn_margin()
        ext_x, ext_y = cfg.arena.extent_x, cfg.arena.extent_y
        speed = float(speed)
        px = float(rng.uniform(margin, ext_x - margin))
        py = float(rng.uniform(margin, ext_y - margin))
        half = cfg.platform.platform_size / 2
        bounds = (half, half, ext_x - half, ext_y - half)
        radius = float(rng.uniform(*ep.circle_radius_range))
        direction = 1 if draws[7] < 0.5 else -1
        wp = sample_waypoint(bounds, rng)

        if kind == "circular":
            phase = math.radians(plat_heading) - direction * math.pi / 2
            center = (px - radius * math.cos(phase), py - radius * math.sin(phase))
            path = PathSpec("circular", slo, shi, center=center, radius=radius, direction=direction, bounds=bounds)
            plat = circle_start(center, radius, phase, direction, speed, path)
        elif kind == "waypoint":
            path = PathSpec("waypoint", slo, shi, bounds=bounds)
            heading = math.degrees(math.atan2(wp[1] - py, wp[0] - px))
            plat = PlatformState(px, py, heading, speed, path, waypoint=wp)
        else:
            path = PathSpec("linear", slo, shi, bounds=bounds)
            plat = PlatformState(px, py, plat_heading, speed, path)

        # UAV placed so the platform sits rho ahead at bearing beta off the nose
        ux = px - rho * math.cos(yaw - beta)
        uy = py - rho * math.sin(yaw - beta)
        top = cfg.platform.top_height
        if not (0 < ux < ext_x and 0 < uy < ext_y):
            raise ConfigError("UAV spawn fell outside the arena")
        x = dyn.hover_state(cfg.airframe, (ux, uy, top + h), yaw)
        fwd = rho * math.cos(beta)
        gimbal = min(max(math.degrees(math.atan2(fwd, h)), 0.0), 90.0)
        self.motors_on = True
        self.state = SimState(0.0, 0, x, gimbal, plat)
        return self.snapshot()

    def snapshot(self) -> SimState:
        s = self.state
        return SimState(s.t, s.step_index, s.x.copy(), s.gimbal_pitch, s.platform, s.terminal)

    # -- stepping -------------------------------------------------------------------
    def step(self, action, gimbal_pitch: Optional[float] = None) -> StepResult:
        """Advance one control period.

        ``action`` = (pitch, roll, yaw, throttle), each in [-1, 1].
        ``gimbal_pitch`` (deg), when given, is the commanded gimbal angle for
        this period.
        """
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        if self.state.terminal != TERMINAL_NONE:
            raise RuntimeError(f"episode already ended ({self.state.terminal})")
        pitch, roll, yaw_cmd, throttle = (float(a) for a in action)
        for a in (pitch, roll, yaw_cmd, throttle):
            if not -1.0 <= a <= 1.0:
                raise ValueError(f"action component {a} outside [-1, 1]")
        cfg = self.config
        st = self.state
        if gimbal_pitch is not None:
            st.gimbal_pitch = min(max(float(gimbal_pitch), 0.0), 90.0)

        sp = self._setpoint
        sp[0] = roll
        sp[1] = pitch
        sp[2] = math.radians(cfg.control.max_yaw_rate) * yaw_cmd
        sp[3] = cfg.control.max_climb_rate * throttle
        if cfg.wind.enabled:
            self._wind[:] = self.rng.uniform(-cfg.wind.max_force, cfg.wind.max_force, 2)

        period = cfg.arena.control_period
        n_sub = cfg.arena.substeps
        plat0 = st.platform
        plat1 = platform_update(plat0, period, self.rng)
        code = dyn.advance(st.x, self._params, sp, n_sub, cfg.arena.physics_dt, self.motors_on,
                           np.array(plat0.position), np.array(plat1.position),
                           math.radians(plat1.heading), self._wind, self._forces, self._info)
        check_finite(st.x)
        ran = int(self._info[1])
        if ran == n_sub:
            st.t = (st.step_index + 1) * period
            st.platform = plat1
        else:
            frac = ran / n_sub
            st.t = st.step_index * period + ran * cfg.arena.physics_dt
            st.platform = _interpolate(plat0, plat1, frac)
        st.step_index += 1

        top = cfg.platform.top_height
        gt = relative_pose(st.x, st.platform, top)
        contact = _CONTACT_NAMES.get(code)
        inside = False
        descent = 0.0
        if code == dyn.TOUCHDOWN_PLATFORM:
            terminal = TERMINAL_LANDING
            inside = gt.inside(cfg.platform.target_size / 2)
            descent = -float(self._info[2])
        elif code != dyn.NO_CONTACT:
            terminal = TERMINAL_CRASH
            descent = -float(self._info[2])
        elif st.t >= cfg.episode.max_duration - 1e-9:
            terminal = TERMINAL_TIMEOUT
        else:
            terminal = TERMINAL_NONE
        st.terminal = terminal

        return StepResult(self.snapshot(), self.detect(), terminal, gt, contact, inside, descent)

    def detect(self) -> Optional[BoundingBox]:
        """Render the detector output for the current state (consumes random draws)."""
        cfg = self.config
        st = self.state
        return render_detection(
            st.x[dyn.PX:dyn.PZ + 1], st.x[dyn.YAW], st.gimbal_pitch,
            st.platform.position, st.platform.heading, cfg.camera, cfg.noise, self.rng,
            target_size=cfg.platform.target_size, platform_top=cfg.platform.top_height,
        )

    def track_gimbal(self, omega: float) -> float:
        """Slew the gimbal toward ``omega`` for one control period; returns the new pitch."""
        cfg = self.config
        self.state.gimbal_pitch = gimbal_track(self.state.gimbal_pitch, omega, cfg.control.gimbal_slew,
                                               cfg.arena.control_period)
        return self.state.gimbal_pitch

    def ground_truth(self) -> RelativePose:
        return relative_pose(self.state.x, self.state.platform, self.config.platform.top_height)

    def height_above_platform(self) -> float:
        return float(self.state.x[dyn.PZ] - self.config.platform.top_height)

    def forward_speed(self) -> float:
        x = self.state.x
        return float(math.cos(x[dyn.YAW]) * x[dyn.VX] + math.sin(x[dyn.YAW]) * x[dyn.VY])


def check_finite(x: np.ndarray) -> None:
    """Raise ``FloatingPointError`` if the physics state has gone non-finite."""
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite simulator state")


def _interpolate(a: PlatformState, b: PlatformState, frac: float) -> PlatformState:
    from dataclasses import replace

    return replace(b, x=a.x + frac * (b.x - a.x), y=a.y + frac * (b.y - a.y))


def dump_trajectory(results, fh: IO[str]) -> int:
    """Write one JSON object per StepResult; returns the line count."""
    n = 0
    for r in results:
        fh.write(json.dumps(r.summary(), sort_keys=True))
        fh.write("\n")
        n += 1
    return n
