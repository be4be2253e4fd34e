"""Per-frame control loop and the line protocol around it.

Each processed frame goes detection → positional observation → gimbal
command → normalized observation → policy mean action. Missing detections
reuse the last observation for up to ``hold_frames`` frames; after that the
loop drops to ``searching`` and commands a zero-lateral, hold-altitude
action until the target is seen again.

Event lines (input) are ``frameId timestamp xmin ymin xmax ymax height
gimbalPitch speed`` with ``-`` for the four box fields when nothing was
detected. Command lines (output) are ``frameId pitch roll yaw throttle
gimbalPitch`` with six decimals.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import IO, Iterable, Iterator, List, Optional, Tuple

import numpy as np

from .geometry import (
    BoundingBox,
    CameraModel,
    GeometryError,
    PositionalObservation,
    VehicleState,
    extract_observation,
)
from .sim.detection import gimbal_track
from .normalize import NormalizationBounds, normalize_observation

SEARCHING = "searching"
TRACKING = "tracking"
LANDED = "landed"
ABORTED = "aborted"


class ProtocolError(ValueError):
    """Malformed event line or out-of-order event."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        prefix = f"line {line_number}: " if line_number is not None else ""
        super().__init__(prefix + message)


class SequenceError(ProtocolError):
    pass


@dataclass(frozen=True)
class DetectionEvent:
    timestamp: float
    frame_id: int
    bbox: Optional[BoundingBox]
    vehicle: VehicleState


@dataclass(frozen=True)
class ControlAction:
    pitch: float = 0.0
    roll: float = 0.0
    yaw: float = 0.0
    throttle: float = 0.0

    def __post_init__(self):
        for name in ("pitch", "roll", "yaw", "throttle"):
            v = getattr(self, name)
            if not -1.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [-1, 1]")

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return self.pitch, self.roll, self.yaw, self.throttle


@dataclass(frozen=True)
class LoopState:
    last_observation: Optional[PositionalObservation] = None
    missed_frames: int = 0
    phase: str = SEARCHING
    last_frame_id: Optional[int] = None
    last_timestamp: Optional[float] = None
    observation_timestamp: Optional[float] = None  # time of the last fresh observation


@dataclass(frozen=True)
class RuntimeConfig:
    camera: CameraModel = CameraModel()
    bounds: NormalizationBounds = NormalizationBounds()
    mode: str = "linear"
    hold_frames: int = 8
    fps: float = 8.0
    gimbal_slew: float = 90.0  # deg/s
    landed_height: float = 0.05  # m

    @property
    def period(self) -> float:
        return 1.0 / self.fps


# -- control loop ------------------------------------------------------------------------

def perceive(loop: LoopState, event: DetectionEvent, cfg: RuntimeConfig = RuntimeConfig()):
    """Observation step of the loop.

    Returns ``(observation or None, fresh, gimbal command, new loop state)``.
    ``fresh`` is False when the observation is a held copy. Raises
    ``SequenceError`` for out-of-order events, leaving ``loop`` untouched.
    """
    if loop.last_frame_id is not None and event.frame_id <= loop.last_frame_id:
        raise SequenceError(f"frame id {event.frame_id} does not follow {loop.last_frame_id}")
    if loop.last_timestamp is not None and not event.timestamp > loop.last_timestamp:
        raise SequenceError(f"timestamp {event.timestamp} does not follow {loop.last_timestamp}")
    veh = event.vehicle
    base = replace(loop, last_frame_id=event.frame_id, last_timestamp=event.timestamp)

    obs = None
    if event.bbox is not None and veh.height > 0:
        dt = cfg.period
        prev = loop.last_observation if loop.missed_frames == 0 else None
        if prev is not None and loop.observation_timestamp is not None:
            dt = event.timestamp - loop.observation_timestamp
        try:
            obs = extract_observation(event.bbox, cfg.camera, veh, previous=prev, dt=dt, mode=cfg.mode)
        except GeometryError:
            # horizon-grazing or malformed boxes count as missed frames
            obs = None
    if obs is not None:
        gimbal = gimbal_track(veh.gimbal_pitch, obs.vertical_angle, cfg.gimbal_slew, cfg.period)
        new = replace(base, last_observation=obs, missed_frames=0, phase=TRACKING,
                      observation_timestamp=event.timestamp)
        return obs, True, gimbal, new

    missed = loop.missed_frames + 1
    if loop.last_observation is not None and missed <= cfg.hold_frames:
        return loop.last_observation, False, veh.gimbal_pitch, replace(base, missed_frames=missed)
    return None, False, veh.gimbal_pitch, replace(base, missed_frames=missed, phase=SEARCHING,
                                                  last_observation=None)


def control_step(loop: LoopState, event: DetectionEvent, policy, cfg: RuntimeConfig = RuntimeConfig()):
    """One deterministic control step: ``(ControlAction, gimbal command, new loop state)``."""
    if loop.phase in (LANDED, ABORTED):
        loop = replace(loop, last_frame_id=event.frame_id, last_timestamp=event.timestamp)
        return ControlAction(), event.vehicle.gimbal_pitch, loop
    obs, _, gimbal, new = perceive(loop, event, cfg)
    if new.phase == TRACKING and event.vehicle.height <= cfg.landed_height:
        return ControlAction(), gimbal, replace(new, phase=LANDED)
    if obs is None:
        return ControlAction(), gimbal, new
    a = policy.act(normalize_observation(obs, cfg.bounds))
    return ControlAction(*(float(v) for v in a)), gimbal, new


def abort(loop: LoopState) -> LoopState:
    return replace(loop, phase=ABORTED)


# -- line protocol -----------------------------------------------------------------------

_EVENT_FIELDS = ("frameId", "timestamp", "xmin", "ymin", "xmax", "ymax", "height", "gimbalPitch", "speed")


def _fmt(v: float) -> str:
    return repr(float(v))


def serialize_detection_event(event: DetectionEvent) -> str:
    """Canonical event line (shortest round-trip float repr), newline-terminated."""
    b = event.bbox
    box = ["-"] * 4 if b is None else [_fmt(b.xmin), _fmt(b.ymin), _fmt(b.xmax), _fmt(b.ymax)]
    v = event.vehicle
    fields = [str(int(event.frame_id)), _fmt(event.timestamp), *box, _fmt(v.height), _fmt(v.gimbal_pitch),
              _fmt(v.speed)]
    return " ".join(fields) + "\n"


def parse_detection_event(line: str, line_number: Optional[int] = None) -> DetectionEvent:
    parts = line.split()
    if len(parts) != len(_EVENT_FIELDS):
        raise ProtocolError(f"expected {len(_EVENT_FIELDS)} fields, got {len(parts)}", line_number)
    try:
        frame_id = int(parts[0])
    except ValueError:
        raise ProtocolError(f"field frameId is not an integer: {parts[0]!r}", line_number) from None

    values = {}
    for name, raw in zip(_EVENT_FIELDS[1:], parts[1:]):
        if raw == "-" and name in ("xmin", "ymin", "xmax", "ymax"):
            values[name] = None
            continue
        try:
            val = float(raw)
        except ValueError:
            raise ProtocolError(f"field {name} is not a number: {raw!r}", line_number) from None
        if not math.isfinite(val):
            raise ProtocolError(f"field {name} is not finite: {raw!r}", line_number)
        values[name] = val
    box_vals = [values[k] for k in ("xmin", "ymin", "xmax", "ymax")]
    if any(v is None for v in box_vals) and not all(v is None for v in box_vals):
        raise ProtocolError("bbox fields must be all present or all '-'", line_number)
    bbox = None
    if box_vals[0] is not None:
        bbox = BoundingBox(*box_vals)
        try:
            bbox.validate()
        except GeometryError as exc:
            raise ProtocolError(f"bad bbox: {exc}", line_number) from None
    vehicle = VehicleState(values["height"], values["gimbalPitch"], values["speed"])
    return DetectionEvent(values["timestamp"], frame_id, bbox, vehicle)


def _fmt6(v: float) -> str:
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


def emit_command(action: ControlAction, gimbal: float, frame_id: int) -> str:
    return f"{int(frame_id)} {_fmt6(action.pitch)} {_fmt6(action.roll)} {_fmt6(action.yaw)} " \
           f"{_fmt6(action.throttle)} {_fmt6(gimbal)}\n"


def parse_command(line: str) -> Tuple[int, ControlAction, float]:
    parts = line.split()
    if len(parts) != 6:
        raise ProtocolError(f"expected 6 command fields, got {len(parts)}")
    vals = [float(p) for p in parts[1:]]
    return int(parts[0]), ControlAction(*vals[:4]), vals[4]


# -- streaming ---------------------------------------------------------------------------

@dataclass
class LatencyStats:
    """Per-step processing latencies in seconds."""

    samples: List[float] = field(default_factory=list)

    def add(self, seconds: float) -> None:
        self.samples.append(seconds)

    @property
    def count(self) -> int:
        return len(self.samples)

    def mean(self) -> float:
        return float(np.mean(self.samples)) if self.samples else 0.0

    def percentile(self, q: float) -> float:
        return float(np.percentile(self.samples, q)) if self.samples else 0.0

    def maximum(self) -> float:
        return max(self.samples) if self.samples else 0.0

    def summary(self) -> dict:
        return {"steps": self.count, "mean_ms": 1e3 * self.mean(), "p99_ms": 1e3 * self.percentile(99),
                "max_ms": 1e3 * self.maximum()}


@dataclass
class StreamSummary:
    events: int
    commands: int
    final_phase: str
    latency: LatencyStats
    errors: List[str]


def iter_events(lines: Iterable[str]) -> Iterator[Tuple[int, DetectionEvent]]:
    for n, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        yield n, parse_detection_event(line, n)


def run_stream(inp: IO[str], out: IO[str], policy, cfg: RuntimeConfig = RuntimeConfig(),
               realtime: bool = False, clock=time.perf_counter, sleep=time.sleep) -> StreamSummary:
    """Consume event lines from ``inp`` and write one command line per event to ``out``.

    With ``realtime`` the loop paces itself to ``cfg.fps``; otherwise events
    are processed as fast as they arrive. Malformed or out-of-order lines
    are skipped and reported in the summary; they produce no command.
    """
    loop = LoopState()
    latency = LatencyStats()
    errors: List[str] = []
    events = commands = 0
    # first call compiles the jitted forward pass; keep that out of frame one
    policy.act(np.zeros(3))
    next_tick = clock()
    for n, line in enumerate(inp, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if realtime:
            delay = next_tick - clock()
            if delay > 0:
                sleep(delay)
            next_tick += cfg.period
        try:
            event = parse_detection_event(line, n)
        except ProtocolError as exc:
            errors.append(str(exc))
            continue
        t0 = clock()
        try:
            action, gimbal, loop = control_step(loop, event, policy, cfg)
        except SequenceError as exc:
            errors.append(f"line {n}: {exc}")
            continue
        text = emit_command(action, gimbal, event.frame_id)
        latency.add(clock() - t0)
        out.write(text)
        events += 1
        commands += 1
    out.flush()
    return StreamSummary(events, commands, loop.phase, latency, errors)
