"""Target positioning from a detector bounding box.

Turns a bounding box plus camera/gimbal/vehicle state into the angles and
distances the controller consumes. Two pixel-to-angle mappings are offered:

* ``"linear"`` (default): angle proportional to pixel offset, as used on the
  deployed system.
* ``"pinhole"``: the exact ray through the pixel is intersected with the
  platform plane, so recovered distances are exact for a point target.

Angles are degrees at every public boundary and radians internally.

Image convention: ``x`` grows to the right (toward the UAV's right side),
``y`` grows downward in the image, and rows further down the image look
further away from the UAV's vertical axis. With that convention the vertical
angle grows with both the vertical pixel offset and the gimbal pitch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

__all__ = [
    "BoundingBox",
    "CameraModel",
    "VehicleState",
    "PositionalObservation",
    "GeometryError",
    "InvalidDetection",
    "OutOfRange",
    "bbox_center",
    "pixel_offsets",
    "horizontal_angle",
    "vertical_angle",
    "ground_distance",
    "direct_distance",
    "platform_speed",
    "camera_footprint",
    "max_undetectable_speed",
    "extract_observation",
    "pinhole_angle",
    "linear_angle_error_bound",
    "DEFAULT_CAMERA",
]


class GeometryError(ValueError):
    """Base class for geometry failures."""


class InvalidDetection(GeometryError):
    """The bounding box violates its invariants (degenerate or out of image)."""


class OutOfRange(GeometryError):
    """The observation sits at or beyond a singularity (horizon, ±90° bearing)."""


@dataclass(frozen=True)
class BoundingBox:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    def validate(self, cam: Optional["CameraModel"] = None) -> None:
        vals = (self.xmin, self.ymin, self.xmax, self.ymax)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidDetection(f"non-finite bbox coordinate in {vals}")
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise InvalidDetection(f"degenerate bbox {vals}")
        if cam is not None:
            if self.xmin < 0 or self.ymin < 0 or self.xmax > cam.image_width or self.ymax > cam.image_height:
                raise InvalidDetection(f"bbox {vals} outside {cam.image_width}x{cam.image_height} image")


@dataclass(frozen=True)
class CameraModel:
    image_width: int = 800
    image_height: int = 600
    hfov: float = 84.0
    vfov: float = 84.0

    def __post_init__(self):
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image dimensions must be positive")
        if not 0.0 < self.hfov < 180.0:
            raise ValueError(f"hfov must be in (0, 180), got {self.hfov}")
        if not 0.0 < self.vfov < 180.0:
            raise ValueError(f"vfov must be in (0, 180), got {self.vfov}")

    @property
    def fx(self) -> float:
        """Horizontal focal length in pixels."""
        return (self.image_width / 2) / math.tan(math.radians(self.hfov) / 2)

    @property
    def fy(self) -> float:
        return (self.image_height / 2) / math.tan(math.radians(self.vfov) / 2)


DEFAULT_CAMERA = CameraModel()


@dataclass(frozen=True)
class VehicleState:
    """Height above the platform plane (m), gimbal pitch from vertical (deg), ground speed (m/s)."""

    height: float
    gimbal_pitch: float = 0.0
    speed: float = 0.0


@dataclass(frozen=True)
class PositionalObservation:
    horizontal_angle: float
    vertical_angle: float
    ground_distance: float
    direct_distance: float
    platform_speed: Optional[float] = None
    height: float = 0.0


def bbox_center(bbox: BoundingBox) -> Tuple[float, float]:
    bbox.validate()
    x_c = bbox.xmax - (bbox.xmax - bbox.xmin) / 2
    y_c = bbox.ymax - (bbox.ymax - bbox.ymin) / 2
    return x_c, y_c


def pixel_offsets(center: Tuple[float, float], cam: CameraModel) -> Tuple[float, float]:
    """Signed pixel offsets of ``center`` from the image center.

    Positive horizontal offset means right of center, positive vertical offset
    means below center.
    """
    x_c, y_c = center
    return x_c - cam.image_width / 2, y_c - cam.image_height / 2


def pinhole_angle(pixel_offset: float, image_size: float, fov: float) -> float:
    """Exact angle (deg) of a pixel offset from the optical axis for a pinhole camera."""
    t = math.tan(math.radians(fov) / 2)
    return math.degrees(math.atan(2.0 * pixel_offset / image_size * t))


def linear_angle_error_bound(fov: float) -> float:
    """Largest gap (deg) between the linear and pinhole pixel→angle maps over a half image.

    With a = fov/2 and normalized offset s in [0, 1] the gap is
    atan(s·tan a) − s·a, which peaks where its derivative vanishes, at
    s* = sqrt(tan(a)/a − 1) / tan(a).
    """
    half = math.radians(fov) / 2
    if half <= 0:
        return 0.0
    t = math.tan(half)
    s = math.sqrt(t / half - 1.0) / t
    return math.degrees(math.atan(s * t) - s * half)


def horizontal_angle(hp_dist: float, cam: CameraModel, mode: str = "linear") -> float:
    if mode == "linear":
        return cam.hfov * hp_dist / cam.image_width
    if mode == "pinhole":
        return pinhole_angle(hp_dist, cam.image_width, cam.hfov)
    raise ValueError(f"unknown angle mode {mode!r}")


def vertical_angle(vp_dist: float, cam: CameraModel, gimbal_pitch: float, mode: str = "linear") -> float:
    """Angle of the target from the UAV's vertical axis (deg).

    Raises:
        OutOfRange: the target sits at or above the horizon (|ω| ≥ 90°).
    """
    if mode == "linear":
        phi = cam.vfov * vp_dist / cam.image_height
    elif mode == "pinhole":
        phi = pinhole_angle(vp_dist, cam.image_height, cam.vfov)
    else:
        raise ValueError(f"unknown angle mode {mode!r}")
    omega = phi + gimbal_pitch
    if abs(omega) >= 90.0:
        raise OutOfRange(f"vertical angle {omega:.3f} deg at or beyond the horizon")
    return omega


def ground_distance(height: float, omega: float) -> float:
    """Distance along the UAV's longitudinal axis to the target (m).

    Signed: negative ω (target behind the vertical axis) gives a negative
    distance.
    """
    if not height > 0:
        raise GeometryError(f"height must be positive, got {height}")
    if abs(omega) >= 90.0:
        raise OutOfRange(f"vertical angle {omega} deg has no ground intersection")
    return height * math.tan(math.radians(omega))


def direct_distance(d1: float, theta: float) -> float:
    if abs(theta) >= 90.0:
        raise OutOfRange(f"horizontal angle {theta} deg outside (-90, 90)")
    return d1 / math.cos(math.radians(theta))


def platform_speed(d_prev: Optional[float], d_curr: float, dt: float, uav_speed: float) -> Optional[float]:
    """Platform speed from two consecutive direct distances.

    ``None`` when there is no previous measurement.
    """
    if d_prev is None:
        return None
    if not dt > 0:
        raise GeometryError(f"frame interval must be positive, got {dt}")
    return (d_curr - d_prev) / dt + uav_speed


def camera_footprint(height: float, cam: CameraModel = DEFAULT_CAMERA) -> Tuple[float, float]:
    """Ground width and length (m) covered by a nadir camera at ``height``."""
    if not height > 0:
        raise GeometryError(f"height must be positive, got {height}")
    width = 2 * height * math.tan(math.radians(cam.hfov) / 2)
    length = 2 * height * math.tan(math.radians(cam.vfov) / 2)
    return width, length


def max_undetectable_speed(footprint_width: float, fps: float) -> float:
    """Platform speed needed to cross the whole footprint between two processed frames."""
    if not fps > 0:
        raise GeometryError(f"fps must be positive, got {fps}")
    return footprint_width * fps


def _pinhole_ground_point(center, cam: CameraModel, height: float, gimbal_pitch: float):
    # Ray through the pixel in the gimbal-stabilized frame (forward, right, up).
    xn = (center[0] - cam.image_width / 2) / cam.fx
    yn = (center[1] - cam.image_height / 2) / cam.fy
    a = math.radians(gimbal_pitch)
    sa, ca = math.sin(a), math.cos(a)
    down = ca - yn * sa
    if down <= 0:
        raise OutOfRange("pixel ray does not intersect the platform plane")
    t = height / down
    return t * (sa + yn * ca), t * xn


def extract_observation(
    bbox: BoundingBox,
    cam: CameraModel,
    vehicle: VehicleState,
    previous: Optional[PositionalObservation] = None,
    dt: float = 0.125,
    mode: str = "linear",
) -> PositionalObservation:
    """Full per-frame pipeline: box → center → offsets → angles → distances → speed.

    In ``"pinhole"`` mode the pixel ray is intersected with the platform plane
    and the angles are reported in the ground frame, so ``direct_distance``
    equals the true ground-plane distance for a point target.

    ``vehicle.speed`` is the UAV's forward ground speed; its component along
    the bearing to the target is what enters the platform-speed estimate.
    """
    bbox.validate(cam)
    if not vehicle.height > 0:
        raise GeometryError(f"vehicle height must be positive, got {vehicle.height}")
    center = bbox_center(bbox)
    hp, vp = pixel_offsets(center, cam)

    if mode == "pinhole":
        fwd, right = _pinhole_ground_point(center, cam, vehicle.height, vehicle.gimbal_pitch)
        omega = math.degrees(math.atan2(fwd, vehicle.height))
        if fwd == 0.0 and right != 0.0:
            raise OutOfRange("target lies abeam of the UAV; bearing is ±90 deg")
        # Bearing measured from the longitudinal axis on the target's side, so
        # the signed distances stay consistent for targets behind the UAV.
        theta = math.degrees(math.atan(right / fwd)) if fwd else 0.0
    else:
        theta = horizontal_angle(hp, cam, mode)
        omega = vertical_angle(vp, cam, vehicle.gimbal_pitch, mode)
    d1 = ground_distance(vehicle.height, omega)
    d2 = direct_distance(d1, theta)
    vp_speed = None
    if previous is not None:
        radial = vehicle.speed * math.cos(math.radians(theta))
        vp_speed = platform_speed(previous.direct_distance, d2, dt, radial)
    return PositionalObservation(theta, omega, d1, d2, vp_speed, vehicle.height)
