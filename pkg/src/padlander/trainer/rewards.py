"""Milestone-based landing rewards.

Heading and distance rewards fire when the quantity has moved a full
threshold away from the value recorded at the previous milestone, not on
per-step deltas: at 8 FPS a single step almost never turns 10° or moves
0.2 m, so per-step readings would make those rewards unreachable.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Tuple


@dataclass(frozen=True)
class RewardSpec:
    turn_toward: float = 0.1
    turn_away: float = -0.3
    within_heading: float = 0.1
    move_toward: float = 0.1
    move_away: float = -0.3
    enter_target: float = 15.0
    stay_in_target: float = 0.2
    heading_milestone: float = 10.0  # deg
    heading_band: float = 5.0  # deg
    distance_milestone: float = 0.2  # m
    # landing target volume: square footprint extruded above the platform surface
    target_half_size: float = 0.3
    target_height: float = 0.3

    def validate(self) -> "RewardSpec":
        if not (abs(self.turn_away) > abs(self.turn_toward) and abs(self.move_away) > abs(self.move_toward)):
            raise ValueError("penalties must be larger in magnitude than the matching rewards")
        if self.turn_away >= 0 or self.move_away >= 0:
            raise ValueError("penalties must be negative")
        if min(self.heading_milestone, self.heading_band, self.distance_milestone) <= 0:
            raise ValueError("thresholds must be positive")
        return self

    def bounds(self) -> Tuple[float, float]:
        """Smallest and largest reward any single step can produce."""
        lo = self.turn_away + 2 * self.move_away
        hi = self.turn_toward + self.within_heading + 2 * self.move_toward + self.enter_target + self.stay_in_target
        return lo, hi


@dataclass(frozen=True)
class ProgressTracker:
    """Per-episode milestone memory."""

    heading: float  # heading error at the last heading milestone, deg
    horizontal: float  # horizontal distance at the last milestone, m
    vertical: float  # height above the platform at the last milestone, m
    in_target: bool = False
    entry_paid: bool = False

    @classmethod
    def start(cls, pose, spec: RewardSpec = RewardSpec()) -> "ProgressTracker":
        return cls(pose.heading_error, pose.horizontal_distance, pose.height, in_target_volume(pose, spec))


def in_target_volume(pose, spec: RewardSpec) -> bool:
    return pose.inside(spec.target_half_size) and pose.height <= spec.target_height


# absorbs float noise so a change of exactly one threshold counts as crossing it
_TOL = 1e-9


def _milestone(last: float, now: float, threshold: float, good: float, bad: float) -> Tuple[float, float]:
    """Reward for a decreasing quantity and the updated milestone value."""
    change = now - last
    if change <= -threshold + _TOL:
        return good, now
    if change >= threshold - _TOL:
        return bad, now
    return 0.0, last


def compute_reward(tracker: ProgressTracker, pose, spec: RewardSpec = RewardSpec()) -> Tuple[float, ProgressTracker]:
    """Reward for reaching ``pose`` and the updated tracker.

    ``pose`` is the simulator ground truth (heading_error in degrees,
    horizontal_distance and height in meters, plus the platform-frame
    offsets used for the target volume). The entry bonus is paid once per
    episode; on the entry step the stay reward does not fire.
    """
    r_turn, heading = _milestone(tracker.heading, pose.heading_error, spec.heading_milestone,
                                 spec.turn_toward, spec.turn_away)
    r_band = spec.within_heading if pose.heading_error <= spec.heading_band + _TOL else 0.0
    r_h, horizontal = _milestone(tracker.horizontal, pose.horizontal_distance, spec.distance_milestone,
                                 spec.move_toward, spec.move_away)
    r_v, vertical = _milestone(tracker.vertical, pose.height, spec.distance_milestone,
                               spec.move_toward, spec.move_away)
    inside = in_target_volume(pose, spec)
    r_target = 0.0
    entry_paid = tracker.entry_paid
    if inside and not tracker.in_target and not entry_paid:
        r_target = spec.enter_target
        entry_paid = True
    elif inside and tracker.in_target:
        r_target = spec.stay_in_target
    reward = r_turn + r_band + r_h + r_v + r_target
    return reward, replace(tracker, heading=heading, horizontal=horizontal, vertical=vertical,
                           in_target=inside, entry_paid=entry_paid)
