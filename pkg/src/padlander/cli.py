"""Command-line entry point: ``padlander <command> [options]``.

Commands:
    train      train a landing policy with PPO
    evaluate   fly the seeded evaluation runs and write the report
    replay     record simulated runs as an event log plus step dumps
    stream     run the control loop over an event stream
    quantize   prune and int8-quantize a policy file
    footprint  camera ground footprint and detection speed limit
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from typing import Any, Mapping, Optional

from .compress import DEFAULT_PRUNE_FRACTION, prune_and_quantize, size_reduction
from .evaluation import EvalConfig, format_summary, run_episode, run_evaluation, summarize
from .geometry import camera_footprint, max_undetectable_speed
from .policy import load_file, save_file
from .runtime import RuntimeConfig, run_stream, serialize_detection_event
from .sim import NoiseSpec, SimConfig, SimWorld
from .sim.config import ConfigError, config_from_dict, load_toml
from .trainer import LandingEnv, LandingEnvSpec, RewardSpec, TrainConfig, train

log = logging.getLogger("padlander")


@dataclasses.dataclass
class Settings:
    """Everything a config file can set, with library defaults for missing tables."""

    sim: SimConfig = dataclasses.field(default_factory=SimConfig)
    train: TrainConfig = dataclasses.field(default_factory=TrainConfig)
    reward: RewardSpec = dataclasses.field(default_factory=RewardSpec)
    eval: EvalConfig = dataclasses.field(default_factory=EvalConfig)

    def runtime(self, fps: Optional[float] = None) -> RuntimeConfig:
        s = self.sim
        return RuntimeConfig(camera=s.camera, fps=fps or s.arena.control_fps, gimbal_slew=s.control.gimbal_slew)


def _table(cls, data: Mapping[str, Any], name: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {', '.join(sorted(unknown))}")
    return cls(**data)


def load_settings(path: Optional[str]) -> Settings:
    """Read a TOML file with optional ``[sim]``, ``[train]``, ``[reward]`` and ``[eval]`` tables."""
    if not path:
        return Settings()
    data = load_toml(path)
    extra = set(data) - {"sim", "train", "reward", "eval"}
    if extra:
        raise ConfigError(f"unknown tables: {', '.join(sorted(extra))}")
    ev = dict(data.get("eval", {}))
    if "noise" in ev:
        ev["noise"] = _table(NoiseSpec, ev["noise"], "eval.noise")
    return Settings(
        sim=config_from_dict(data.get("sim", {})),
        train=_table(TrainConfig, data.get("train", {}), "train"),
        reward=_table(RewardSpec, data.get("reward", {}), "reward").validate(),
        eval=_table(EvalConfig, ev, "eval"),
    )


def _out_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


# -- commands ----------------------------------------------------------------------------

def cmd_train(args, settings: Settings) -> int:
    cfg = settings.train
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.steps is not None:
        overrides["total_steps"] = args.steps
    cfg = dataclasses.replace(cfg, **overrides).validate()
    spec = LandingEnvSpec(sim=settings.sim, runtime=settings.runtime(), reward=settings.reward, gamma=cfg.gamma)

    def progress(row):
        print(f"iter {row['iteration']:4d}  steps {row['steps']:8d}  episodes {row['episodes']:4d}  "
              f"reward {row['mean_reward']:8.2f}  success {row['success_rate']:.3f}", flush=True)

    result = train(cfg, lambda i: LandingEnv(spec), out_dir=_out_dir(args.out), progress=progress)
    print(f"wrote {os.path.join(args.out, 'policy.pdl')} after {len(result.curve)} iterations")
    return 0


def _eval_config(args, settings: Settings) -> EvalConfig:
    cfg = settings.eval
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.episodes is not None:
        cfg = dataclasses.replace(cfg, runs=args.episodes)
    return cfg


def cmd_evaluate(args, settings: Settings) -> int:
    policy = load_file(args.policy)
    cfg = _eval_config(args, settings)
    report = run_evaluation(policy, cfg, base=settings.sim, runtime=settings.runtime(args.fps))
    text = format_summary(summarize(report))
    out = _out_dir(args.out)
    with open(os.path.join(out, "report.csv"), "w") as fh:
        fh.write(report.to_csv())
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_replay(args, settings: Settings) -> int:
    """Fly evaluation runs, writing each run's event log and a JSON line per control step.

    Every run is its own stream (``events_NNN.txt``) since frame ids restart
    with each flight.
    """
    policy = load_file(args.policy)
    cfg = _eval_config(args, settings)
    out = _out_dir(args.out)
    world = SimWorld(cfg.sim_config(settings.sim))
    runtime = settings.runtime(args.fps)
    with open(os.path.join(out, "trajectory.jsonl"), "w") as tr_fh:
        for i in range(cfg.runs):
            seed, speed, kind = cfg.run_plan(i)
            trace: list = []
            rec = run_episode(policy, world, seed, speed, kind, runtime, cfg.target_half_size, i, trace)
            with open(os.path.join(out, f"events_{i:03d}.txt"), "w") as ev_fh:
                ev_fh.write(f"# run {i} seed {seed} speed {speed} path {kind}\n")
                for event, action, gimbal in trace:
                    ev_fh.write(serialize_detection_event(event))
                    tr_fh.write(json.dumps({"run": i, "frame": event.frame_id, "t": event.timestamp,
                                            "height": event.vehicle.height, "gimbal": gimbal,
                                            "action": list(action.as_tuple()),
                                            "detected": event.bbox is not None}, sort_keys=True) + "\n")
            print(f"run {i}: {rec.terminal} offset {rec.offset:.3f} m inside={rec.inside_target}")
    return 0


def cmd_stream(args, settings: Settings) -> int:
    policy = load_file(args.policy)
    inp = open(args.input) if args.input and args.input != "-" else sys.stdin
    out = open(args.output, "w") if args.output and args.output != "-" else sys.stdout
    try:
        summary = run_stream(inp, out, policy, settings.runtime(args.fps), realtime=args.realtime)
    finally:
        if inp is not sys.stdin:
            inp.close()
        if out is not sys.stdout:
            out.close()
    stats = summary.latency.summary()
    print(f"events {summary.events}  commands {summary.commands}  phase {summary.final_phase}  "
          f"mean {stats['mean_ms']:.3f} ms  p99 {stats['p99_ms']:.3f} ms  max {stats['max_ms']:.3f} ms",
          file=sys.stderr)
    for err in summary.errors:
        print(f"skipped: {err}", file=sys.stderr)
    return 0


def cmd_quantize(args, settings: Settings) -> int:
    policy = load_file(args.policy)
    q = prune_and_quantize(policy, args.prune_fraction)
    save_file(q, args.output)
    print(f"{len(policy.to_bytes())} -> {len(q.to_bytes())} bytes "
          f"({100 * size_reduction(policy, q):.1f}% smaller), wrote {args.output}")
    return 0


def cmd_footprint(args, settings: Settings) -> int:
    cam = settings.sim.camera
    fps = args.fps or settings.sim.arena.control_fps
    w, l = camera_footprint(args.altitude, cam)
    print(f"footprint at {args.altitude:g} m: {w:.2f} x {l:.2f} m")
    print(f"max undetectable platform speed at {fps:g} FPS: {max_undetectable_speed(w, fps):.2f} m/s")
    return 0


# -- parser ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="padlander", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="TOML config with [sim], [train], [reward] and [eval] tables")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a landing policy")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int, help="total environment steps")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    for name, func, help_ in (("evaluate", cmd_evaluate, "evaluate a policy"),
                              ("replay", cmd_replay, "record simulated runs")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--policy", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--episodes", type=int, help="number of runs")
        p.add_argument("--fps", type=float)
        p.add_argument("--out", required=True, help="output directory")
        p.set_defaults(func=func)

    p = sub.add_parser("stream", help="run the control loop over event lines")
    p.add_argument("--policy", required=True)
    p.add_argument("--fps", type=float)
    p.add_argument("--input", default="-", help="event file (default stdin)")
    p.add_argument("--output", default="-", help="command file (default stdout)")
    p.add_argument("--realtime", action="store_true", help="pace processing to the frame rate")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("quantize", help="prune and int8-quantize a policy")
    p.add_argument("--policy", required=True)
    p.add_argument("--prune-fraction", type=float, default=DEFAULT_PRUNE_FRACTION)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("footprint", help="camera footprint calculator")
    p.add_argument("--altitude", type=float, default=5.0)
    p.add_argument("--fps", type=float)
    p.set_defaults(func=cmd_footprint)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = load_settings(args.config)
        return args.func(args, settings)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"padlander: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
