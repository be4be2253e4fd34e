"""Batched landing evaluation in simulation.

Each run spawns the UAV above a moving platform and flies the deployment
control loop (deterministic policy mean, hold-last-observation, search
fallback) until touchdown, crash or timeout. Offsets come from simulator
ground truth at the contact instant, in the platform's own frame.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geometry import VehicleState
from .runtime import DetectionEvent, LoopState, RuntimeConfig, control_step
from .sim import NoiseSpec, SimConfig, SimWorld
from .sim.world import TERMINAL_NONE

BATCH_SIZE = 5


@dataclass(frozen=True)
class EvalConfig:
    runs: int = 40
    altitude_range: Tuple[float, float] = (2.0, 20.0)
    platform_speeds: Tuple[float, ...] = (0.1, 0.2, 0.3, 0.4)
    path_kinds: Tuple[str, ...] = ("linear", "circular", "waypoint")
    uav_speed_cap: float = 0.4
    noise: NoiseSpec = NoiseSpec()
    seed: int = 0
    target_half_size: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "altitude_range", tuple(self.altitude_range))
        object.__setattr__(self, "platform_speeds", tuple(float(s) for s in self.platform_speeds))
        object.__setattr__(self, "path_kinds", tuple(self.path_kinds))
        if self.runs <= 0:
            raise ValueError("runs must be positive")
        if not self.platform_speeds or min(self.platform_speeds) < 0:
            raise ValueError("platform speeds must be non-negative")

    def sim_config(self, base: Optional[SimConfig] = None) -> SimConfig:
        base = base or SimConfig()
        return replace(
            base,
            noise=self.noise,
            control=replace(base.control, speed_cap=self.uav_speed_cap),
            episode=replace(base.episode, altitude_range=self.altitude_range, path_kinds=self.path_kinds),
        )

    def run_plan(self, i: int) -> Tuple[int, float, str]:
        """(seed, platform speed, path kind) of run ``i``."""
        seed = int(np.random.SeedSequence([self.seed, i]).generate_state(1)[0])
        speed = self.platform_speeds[i % len(self.platform_speeds)]
        kind = self.path_kinds[(i // len(self.platform_speeds)) % len(self.path_kinds)]
        return seed, speed, kind


@dataclass(frozen=True)
class RunRecord:
    run: int
    seed: int
    start_altitude: float
    platform_speed: float
    path: str
    terminal: str  # landing | crash | timeout
    contact: str  # platform | ground | tilt | wall | none
    offset_along: float  # m, platform frame; nan without a touchdown
    offset_across: float
    offset: float
    inside_target: bool
    duration: float  # s
    descent_speed: float  # m/s at contact; nan without a touchdown

    @property
    def touched_down(self) -> bool:
        return math.isfinite(self.offset)


def _is_inside(along: float, across: float, half: float) -> bool:
    return abs(along) <= half and abs(across) <= half


@dataclass
class EvalReport:
    records: List[RunRecord] = field(default_factory=list)
    target_half_size: float = 0.3

    def touchdowns(self) -> List[RunRecord]:
        return [r for r in self.records if r.touched_down]

    @property
    def inside_count(self) -> int:
        return sum(r.inside_target for r in self.records)

    @property
    def inside_rate(self) -> float:
        return self.inside_count / len(self.records) if self.records else float("nan")

    @property
    def average_deviation(self) -> float:
        """Mean touchdown offset from the platform center (m)."""
        td = self.touchdowns()
        return float(np.mean([r.offset for r in td])) if td else float("nan")

    @property
    def mean_landing_speed(self) -> float:
        td = [r for r in self.records if r.terminal == "landing"]
        return float(np.mean([r.descent_speed for r in td])) if td else float("nan")

    def aggregates(self) -> dict:
        return {
            "runs": len(self.records),
            "inside_target": self.inside_count,
            "inside_rate": self.inside_rate,
            "average_deviation": self.average_deviation,
            "mean_landing_speed": self.mean_landing_speed,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = [f.name for f in fields(RunRecord)]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names)
        for r in self.records:
            w.writerow([_cell(getattr(r, n)) for n in names])
        for k, v in self.aggregates().items():
            w.writerow([f"# {k}", _cell(v)])
        w.writerow(["# target_half_size", _cell(self.target_half_size)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EvalReport":
        rows = list(csv.reader(io.StringIO(text)))
        header = rows[0]
        types = {f.name: f.type for f in fields(RunRecord)}
        records = []
        half = 0.3
        for row in rows[1:]:
            if row and row[0].startswith("#"):
                if row[0] == "# target_half_size":
                    half = float(row[1])
                continue
            vals = {}
            for name, raw in zip(header, row):
                t = types[name]
                if t in ("int", int):
                    vals[name] = int(raw)
                elif t in ("float", float):
                    vals[name] = float(raw)
                elif t in ("bool", bool):
                    vals[name] = raw == "True"
                else:
                    vals[name] = raw
            records.append(RunRecord(**vals))
        return cls(records, half)


def _cell(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def run_episode(policy, world: SimWorld, seed: int, platform_speed: float, path_kind: str,
                runtime: RuntimeConfig, half: float, run: int = 0, trace: Optional[list] = None) -> RunRecord:
    """Fly one deployment-mode episode and record its touchdown."""
    state = world.reset(seed, platform_speed=platform_speed, path_kind=path_kind)
    start_alt = world.height_above_platform()
    loop = LoopState()
    detection = world.detect()
    while True:
        st = world.state
        event = DetectionEvent(st.t, st.step_index, detection,
                               VehicleState(world.height_above_platform(), st.gimbal_pitch, world.forward_speed()))
        action, gimbal, loop = control_step(loop, event, policy, runtime)
        if trace is not None:
            trace.append((event, action, gimbal))
        r = world.step(action.as_tuple(), gimbal_pitch=gimbal)
        if r.terminal != TERMINAL_NONE:
            break
        detection = r.detection
    gt = r.ground_truth
    if r.contact is not None:
        along, across = gt.offset_along, gt.offset_across
        offset = math.hypot(along, across)
        descent = r.descent_speed
    else:
        along = across = offset = descent = float("nan")
    inside = r.terminal == "landing" and _is_inside(along, across, half)
    return RunRecord(run, seed, float(start_alt), float(platform_speed), path_kind, r.terminal,
                     r.contact or "none", float(along), float(across), float(offset), inside,
                     float(r.state.t), float(descent))


def run_evaluation(policy, cfg: EvalConfig = EvalConfig(), base: Optional[SimConfig] = None,
                   runtime: Optional[RuntimeConfig] = None) -> EvalReport:
    """Evaluate ``policy`` over ``cfg.runs`` seeded runs, in run order."""
    sim_cfg = cfg.sim_config(base)
    world = SimWorld(sim_cfg)
    runtime = runtime or RuntimeConfig(camera=sim_cfg.camera, fps=sim_cfg.arena.control_fps,
                                       gimbal_slew=sim_cfg.control.gimbal_slew)
    report = EvalReport(target_half_size=cfg.target_half_size)
    for i in range(cfg.runs):
        seed, speed, kind = cfg.run_plan(i)
        report.records.append(run_episode(policy, world, seed, speed, kind, runtime, cfg.target_half_size, i))
    return report


def record_events(policy, n_events: int, cfg: EvalConfig = EvalConfig(),
                  base: Optional[SimConfig] = None, min_height: float = -math.inf) -> List[DetectionEvent]:
    """Detection events from consecutive evaluation runs, renumbered into one stream.

    Frame ids and timestamps keep increasing across run boundaries, so the
    result reads like a single long camera feed. Events at or below
    ``min_height`` are dropped, which keeps a replaying loop from ever
    switching to ``landed``.
    """
    sim_cfg = cfg.sim_config(base)
    world = SimWorld(sim_cfg)
    runtime = RuntimeConfig(camera=sim_cfg.camera, fps=sim_cfg.arena.control_fps,
                            gimbal_slew=sim_cfg.control.gimbal_slew)
    events: List[DetectionEvent] = []
    i = 0
    while len(events) < n_events:
        trace: list = []
        seed, speed, kind = cfg.run_plan(i)
        run_episode(policy, world, seed, speed, kind, runtime, cfg.target_half_size, i, trace)
        for ev, _, _ in trace:
            if ev.vehicle.height <= min_height:
                continue
            k = len(events)
            events.append(replace(ev, frame_id=k, timestamp=k * runtime.period))
        i += 1
    return events[:n_events]


@dataclass(frozen=True)
class BatchRow:
    runs: str  # e.g. "1-5"
    average_distance: float  # m
    inside: int


@dataclass(frozen=True)
class SummaryRow:
    accuracy: float  # mean touchdown offset, m
    landing_speed: float  # mean descent speed at touchdown, m/s
    max_altitude: float  # highest start altitude tested, m
    moving_target: bool
    inside_rate: float
    batches: Tuple[BatchRow, ...]


def batch_rows(records: Sequence[RunRecord], size: int = BATCH_SIZE) -> List[BatchRow]:
    rows = []
    for start in range(0, len(records), size):
        chunk = records[start:start + size]
        offs = [r.offset for r in chunk if r.touched_down]
        avg = float(np.mean(offs)) if offs else float("nan")
        rows.append(BatchRow(f"{start + 1}-{start + len(chunk)}", avg, sum(r.inside_target for r in chunk)))
    return rows


def summarize(report: EvalReport) -> SummaryRow:
    if not report.records:
        raise ValueError("cannot summarize an empty report")
    return SummaryRow(
        accuracy=report.average_deviation,
        landing_speed=report.mean_landing_speed,
        max_altitude=max(r.start_altitude for r in report.records),
        moving_target=any(r.platform_speed > 0 for r in report.records),
        inside_rate=report.inside_rate,
        batches=tuple(batch_rows(report.records)),
    )


def format_summary(row: SummaryRow) -> str:
    lines = ["Runs    Avg distance from center    Landings inside target"]
    for b in row.batches:
        dist = "   n/a" if math.isnan(b.average_distance) else f"{100 * b.average_distance:5.1f}cm"
        lines.append(f"{b.runs:<8}{dist:>14}{b.inside:>24}")
    lines.append("")
    lines.append("Accuracy (m)  Landing speed (m/s)  Max altitude (m)  Moving target  Inside rate")
    lines.append(f"{row.accuracy:12.3f}  {row.landing_speed:19.3f}  {row.max_altitude:16.1f}  "
                 f"{'Yes' if row.moving_target else 'No':>13}  {100 * row.inside_rate:10.1f}%")
    return "\n".join(lines) + "\n"
