"""Synthetic detector and gimbal tracking.

The detector stands in for a learned object detector: it projects the
target's corners through an exact pinhole camera, takes the axis-aligned
envelope, jitters it and occasionally drops it.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..geometry import BoundingBox, CameraModel
from .config import NoiseSpec


def camera_axes(yaw: float, gimbal_pitch_deg: float):
    """Optical axis, image-right and image-down unit vectors (world frame).

    ``yaw`` in radians. The gimbal is roll/pitch stabilized, so only the UAV
    heading and gimbal pitch orient the camera.
    """
    a = math.radians(gimbal_pitch_deg)
    ca, sa = math.cos(a), math.sin(a)
    cy, sy = math.cos(yaw), math.sin(yaw)
    axis = (sa * cy, sa * sy, -ca)
    right = (sy, -cy, 0.0)
    down = (ca * cy, ca * sy, sa)
    return axis, right, down


def project_points(points: np.ndarray, cam_pos, yaw: float, gimbal_pitch: float, cam: CameraModel):
    """Pixel coordinates (N, 2) and depth along the optical axis (N,)."""
    axis, right, down = camera_axes(yaw, gimbal_pitch)
    rel = points - np.asarray(cam_pos)
    depth = rel @ np.asarray(axis)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = cam.image_width / 2 + cam.fx * (rel @ np.asarray(right)) / depth
        v = cam.image_height / 2 + cam.fy * (rel @ np.asarray(down)) / depth
    return np.stack([u, v], axis=-1), depth


def target_corners(x: float, y: float, heading_deg: float, size: float, z: float):
    h = math.radians(heading_deg)
    c, s = math.cos(h), math.sin(h)
    half = size / 2
    return [(x + c * a - s * b, y + s * a + c * b, z)
            for a, b in ((half, half), (half, -half), (-half, -half), (-half, half))]


def render_detection(
    uav_pos,
    yaw: float,
    gimbal_pitch: float,
    platform_xy,
    platform_heading: float,
    cam: CameraModel,
    noise: NoiseSpec,
    rng: Optional[np.random.Generator],
    target_size: float = 0.6,
    platform_top: float = 0.2,
) -> Optional[BoundingBox]:
    """Bounding box of the landing target as the camera sees it, or ``None``.

    ``None`` when the target center is outside the view frustum or when the
    detection is dropped (probability ``noise.p_miss``). The random draws are
    always consumed in the same order so runs replay exactly.
    """
    (ax, ay, az), (rx, ry, _), (dx, dy, dz) = camera_axes(yaw, gimbal_pitch)
    fx, fy = cam.fx, cam.fy
    w2, h2 = cam.image_width / 2, cam.image_height / 2
    cx, cy, cz = uav_pos

    def proj(px, py, pz):
        ex, ey, ez = px - cx, py - cy, pz - cz
        depth = ex * ax + ey * ay + ez * az
        if depth <= 0:
            return None
        return w2 + fx * (ex * rx + ey * ry) / depth, h2 + fy * (ex * dx + ey * dy + ez * dz) / depth

    if rng is not None:
        miss = rng.random()
        jitter = rng.standard_normal(4)
    else:
        miss, jitter = 1.0, (0.0, 0.0, 0.0, 0.0)
    center = proj(platform_xy[0], platform_xy[1], platform_top)
    if center is None:
        return None
    if not (0.0 <= center[0] <= cam.image_width and 0.0 <= center[1] <= cam.image_height):
        return None
    if miss < noise.p_miss:
        return None

    us, vs = [], []
    clipped = False
    for px, py, pz in target_corners(platform_xy[0], platform_xy[1], platform_heading, target_size, platform_top):
        uv = proj(px, py, pz)
        if uv is None:
            clipped = True
            continue
        us.append(uv[0])
        vs.append(uv[1])
    xmin, xmax, ymin, ymax = min(us), max(us), min(vs), max(vs)
    if clipped:
        # corners behind the image plane lie beyond the near image edge
        ymin = 0.0
    sigma = noise.pixel_sigma
    xmin = min(max(xmin + sigma * jitter[0], 0.0), cam.image_width)
    ymin = min(max(ymin + sigma * jitter[1], 0.0), cam.image_height)
    xmax = min(max(xmax + sigma * jitter[2], 0.0), cam.image_width)
    ymax = min(max(ymax + sigma * jitter[3], 0.0), cam.image_height)
    if not (xmin < xmax and ymin < ymax):
        return None
    return BoundingBox(float(xmin), float(ymin), float(xmax), float(ymax))


def gimbal_track(current_pitch: float, omega: float, slew_rate: float = 90.0, period: float = 0.125,
                 limits=(0.0, 90.0)) -> float:
    """Move the gimbal pitch toward ``omega`` by at most ``slew_rate * period`` degrees."""
    max_step = slew_rate * period
    delta = omega - current_pitch
    if delta > max_step:
        delta = max_step
    elif delta < -max_step:
        delta = -max_step
    return min(max(current_pitch + delta, limits[0]), limits[1])
