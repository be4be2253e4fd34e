"""Moving landing platform kinematics."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

PATH_KINDS = ("linear", "circular", "waypoint")


@dataclass(frozen=True)
class PathSpec:
    kind: str = "linear"
    min_speed: float = 0.0
    max_speed: float = 1.0
    # circular paths
    center: Tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0
    direction: int = 1  # +1 counter-clockwise
    # walls / waypoint sampling region: (xmin, ymin, xmax, ymax)
    bounds: Tuple[float, float, float, float] = (0.5, 0.5, 39.5, 39.5)

    def __post_init__(self):
        if self.kind not in PATH_KINDS:
            raise ValueError(f"unknown path kind {self.kind!r}")
        if not 0 <= self.min_speed <= self.max_speed:
            raise ValueError(f"bad speed range [{self.min_speed}, {self.max_speed}]")


@dataclass(frozen=True)
class PlatformState:
    x: float
    y: float
    heading: float  # deg, CCW from +x
    speed: float
    path: PathSpec
    phase: float = 0.0  # rad, circular paths
    waypoint: Optional[Tuple[float, float]] = None

    @property
    def position(self) -> Tuple[float, float]:
        return self.x, self.y

    @property
    def velocity(self) -> Tuple[float, float]:
        h = math.radians(self.heading)
        return self.speed * math.cos(h), self.speed * math.sin(h)


def circle_start(center, radius, phase, direction, speed, path) -> PlatformState:
    x = center[0] + radius * math.cos(phase)
    y = center[1] + radius * math.sin(phase)
    heading = math.degrees(phase) + 90.0 * direction
    return PlatformState(x, y, heading, speed, path, phase=phase)


def sample_waypoint(bounds, rng: np.random.Generator) -> Tuple[float, float]:
    return float(rng.uniform(bounds[0], bounds[2])), float(rng.uniform(bounds[1], bounds[3]))


def _reflect(v, vel, lo, hi):
    while v < lo or v > hi:
        if v > hi:
            v = 2 * hi - v
        else:
            v = 2 * lo - v
        vel = -vel
    return v, vel


def platform_update(plat: PlatformState, dt: float, rng: Optional[np.random.Generator] = None) -> PlatformState:
    """Advance the platform by ``dt`` seconds along its path.

    Linear paths reflect off the bounds with speed preserved. Waypoint paths
    head straight for the current waypoint and, on arrival, draw a new
    waypoint and speed from ``rng``.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    path = plat.path
    if plat.speed == 0.0 and path.kind != "waypoint":
        return plat

    if path.kind == "linear":
        vx, vy = plat.velocity
        x, vx = _reflect(plat.x + vx * dt, vx, path.bounds[0], path.bounds[2])
        y, vy = _reflect(plat.y + vy * dt, vy, path.bounds[1], path.bounds[3])
        heading = plat.heading
        if (vx, vy) != plat.velocity:
            heading = math.degrees(math.atan2(vy, vx))
        return replace(plat, x=x, y=y, heading=heading)

    if path.kind == "circular":
        phase = plat.phase + path.direction * plat.speed / path.radius * dt
        phase = math.remainder(phase, 2 * math.pi)
        return circle_start(path.center, path.radius, phase, path.direction, plat.speed, path)

    # waypoint
    if rng is None:
        raise ValueError("waypoint paths need an rng")
    x, y = plat.x, plat.y
    speed = plat.speed
    wp = plat.waypoint if plat.waypoint is not None else sample_waypoint(path.bounds, rng)
    heading = plat.heading
    remaining_time = dt
    for _ in range(64):
        if remaining_time <= 0 or speed == 0.0:
            break
        dx, dy = wp[0] - x, wp[1] - y
        dist = math.hypot(dx, dy)
        step = speed * remaining_time
        if dist > step:
            x += dx / dist * step
            y += dy / dist * step
            heading = math.degrees(math.atan2(dy, dx))
            break
        x, y = wp
        remaining_time -= dist / speed
        wp = sample_waypoint(path.bounds, rng)
        speed = float(rng.uniform(path.min_speed, path.max_speed))
    return replace(plat, x=x, y=y, heading=heading, speed=speed, waypoint=wp)
