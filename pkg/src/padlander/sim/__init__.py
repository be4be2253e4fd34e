"""Quadrotor and moving-platform simulator."""

from .config import (
    AirframeConfig,
    ArenaConfig,
    ConfigError,
    ControlMapping,
    EpisodeSpec,
    GainConfig,
    NoiseSpec,
    PlatformGeometry,
    SimConfig,
    WindSpec,
    config_from_dict,
    load_sim_config,
)
from .detection import gimbal_track, render_detection
from .platform import PathSpec, PlatformState, platform_update
from .world import (
    TERMINAL_CRASH,
    TERMINAL_LANDING,
    TERMINAL_NONE,
    TERMINAL_TIMEOUT,
    RelativePose,
    SimState,
    SimWorld,
    StepResult,
    UavBody,
    dump_trajectory,
)
