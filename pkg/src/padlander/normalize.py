"""Fixed-bounds observation normalization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import PositionalObservation


@dataclass(frozen=True)
class NormalizationBounds:
    max_angle: float = 180.0  # deg
    max_ground_distance: float = 10.0  # m
    max_altitude: float = 20.0  # m

    def __post_init__(self):
        if min(self.max_angle, self.max_ground_distance, self.max_altitude) <= 0:
            raise ValueError(f"normalization bounds must be positive: {self}")


class SaturationStats:
    """Counts how often each observation component hit the clamp."""

    def __init__(self):
        self.total = 0
        self.saturated = np.zeros(3, dtype=np.int64)

    def update(self, raw: np.ndarray) -> None:
        self.total += 1
        self.saturated += np.abs(raw) > 1.0


def normalize_observation(obs: PositionalObservation, bounds: NormalizationBounds = NormalizationBounds(),
                          stats: Optional[SaturationStats] = None) -> np.ndarray:
    """(rotation difference, horizontal distance, vertical distance) scaled and clamped to [-1, 1]."""
    raw = np.array([
        obs.horizontal_angle / bounds.max_angle,
        obs.ground_distance / bounds.max_ground_distance,
        obs.height / bounds.max_altitude,
    ])
    if stats is not None:
        stats.update(raw)
    return np.clip(raw, -1.0, 1.0)
