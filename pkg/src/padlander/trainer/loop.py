"""Rollout collection and the training loop."""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from ..policy import ACTION_EPS, Architecture, Policy, gaussian_log_prob, save_file
from .gae import Trajectory, gae_advantages
from .ppo import Adam, TrainConfig, TrainingDiverged, ppo_update

log = logging.getLogger(__name__)

CURVE_FIELDS = ("iteration", "steps", "episodes", "mean_reward", "success_rate", "loss", "policy_loss",
                "value_loss", "entropy", "approx_kl", "clip_fraction")


def episode_seed(base: int, env_index: int, episode: int) -> int:
    return int(np.random.SeedSequence([base, env_index, episode]).generate_state(1)[0])


@dataclass
class EpisodeRecord:
    env: int
    ret: float
    length: int
    kind: str
    success: bool


class VecEnv:
    """A list of environments stepped in lockstep with automatic resets.

    Episode ``k`` of env ``i`` is reset with ``episode_seed(seed, i, k)``.
    """

    def __init__(self, envs: Sequence, seed: int = 0):
        self.envs = list(envs)
        self.seed = seed
        self.episode_counts = [0] * len(self.envs)
        self.returns = np.zeros(len(self.envs))
        self.lengths = [0] * len(self.envs)
        self.finished: List[EpisodeRecord] = []
        self.obs = np.stack([self._reset(i) for i in range(len(self.envs))])

    def __len__(self) -> int:
        return len(self.envs)

    def _reset(self, i: int) -> np.ndarray:
        s = episode_seed(self.seed, i, self.episode_counts[i])
        self.episode_counts[i] += 1
        return self.envs[i].reset(s)

    def step(self, actions: np.ndarray):
        n = len(self.envs)
        rewards = np.zeros(n)
        dones = np.zeros(n)
        tvals = np.zeros(n)
        for i, env in enumerate(self.envs):
            obs, r, done, info = env.step(actions[i])
            rewards[i] = r
            tvals[i] = info.get("terminal_value", 0.0)
            self.returns[i] += r
            self.lengths[i] += 1
            if done:
                dones[i] = 1.0
                self.finished.append(EpisodeRecord(i, float(self.returns[i]), self.lengths[i],
                                                   info.get("kind", ""), bool(info.get("success", False))))
                self.returns[i] = 0.0
                self.lengths[i] = 0
                obs = self._reset(i)
            self.obs[i] = obs
        return rewards, dones, tvals

    def drain(self) -> List[EpisodeRecord]:
        out, self.finished = self.finished, []
        return out


def collect_rollout(policy: Policy, venv: VecEnv, length: int, rng: np.random.Generator) -> Trajectory:
    """Step every env ``length`` times with sampled (tanh-squashed) actions."""
    n = len(venv)
    a_dim = policy.arch.action_dim
    obs_buf = np.zeros((length, n, policy.arch.input_dim))
    u_buf = np.zeros((length, n, a_dim))
    logp_buf = np.zeros((length, n))
    rew_buf = np.zeros((length, n))
    val_buf = np.zeros((length, n))
    done_buf = np.zeros((length, n))
    tv_buf = np.zeros((length, n))
    std = policy.std
    log_std = policy.log_std
    for t in range(length):
        obs = venv.obs.copy()
        means, values, _ = policy.forward_batch(obs)
        u = means + std * rng.standard_normal((n, a_dim))
        actions = np.clip(np.tanh(u), -1.0 + ACTION_EPS, 1.0 - ACTION_EPS)
        obs_buf[t] = obs
        u_buf[t] = u
        logp_buf[t] = gaussian_log_prob(means, log_std, u)
        val_buf[t] = values
        rew_buf[t], done_buf[t], tv_buf[t] = venv.step(actions)
    _, last_values, _ = policy.forward_batch(venv.obs.copy())
    return Trajectory(obs_buf, u_buf, logp_buf, rew_buf, val_buf, done_buf, tv_buf, last_values)


@dataclass
class TrainResult:
    policy: Policy
    curve: List[dict] = field(default_factory=list)
    episodes: List[EpisodeRecord] = field(default_factory=list)


def write_curve(rows: List[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CURVE_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(row[k]) if isinstance(row[k], float) else row[k]) for k in CURVE_FIELDS})


def read_curve(path) -> List[dict]:
    with open(path, newline="") as fh:
        rows = []
        for r in csv.DictReader(fh):
            rows.append({k: (int(v) if k in ("iteration", "steps", "episodes") else float(v)) for k, v in r.items()})
        return rows


def smoothed_returns(episodes: List[EpisodeRecord], window: int = 50) -> np.ndarray:
    """Moving average of episode returns in completion order."""
    r = np.array([e.ret for e in episodes], dtype=float)
    if r.size < window:
        return r.cumsum() / np.arange(1, r.size + 1) if r.size else r
    c = np.concatenate([[0.0], np.cumsum(r)])
    return (c[window:] - c[:-window]) / window


def train(cfg: TrainConfig, env_factory: Callable[[int], object], out_dir: Optional[str] = None,
          initial: Optional[Policy] = None, progress: Optional[Callable[[dict], None]] = None) -> TrainResult:
    """Alternate rollout collection, GAE and PPO updates for ``cfg.total_steps`` env steps.

    ``env_factory(i)`` builds env ``i``. With ``out_dir`` the curve is written
    to ``training_curve.csv``, checkpoints to ``checkpoint_XXXX.pdl`` every
    ``cfg.checkpoint_every`` iterations and the result to ``policy.pdl``.
    """
    cfg.validate()
    arch = Architecture(hidden=cfg.hidden)
    policy = initial if initial is not None else Policy.init(arch, seed=cfg.seed, log_std=cfg.log_std_init)
    result = TrainResult(policy)
    iterations = cfg.total_steps // cfg.batch_size
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    if iterations == 0:
        if out_dir:
            save_file(policy, os.path.join(out_dir, "policy.pdl"))
            write_curve([], os.path.join(out_dir, "training_curve.csv"))
        return result

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    venv = VecEnv([env_factory(i) for i in range(cfg.n_envs)], seed=cfg.seed)
    opt = Adam(policy.arch.n_params(), cfg.learning_rate)
    steps = 0
    for it in range(1, iterations + 1):
        traj = collect_rollout(policy, venv, cfg.rollout_length, rng)
        steps += len(traj)
        gae_advantages(traj, cfg.gamma, cfg.lam)
        episodes = venv.drain()
        result.episodes.extend(episodes)
        mean_reward = float(np.mean([e.ret for e in episodes])) if episodes else float("nan")
        if episodes and not math.isfinite(mean_reward):
            _abort(policy, out_dir, "non-finite episode reward")
        try:
            policy, stats = ppo_update(policy, traj, cfg, opt, rng)
        except TrainingDiverged as exc:
            _abort(policy, out_dir, str(exc))
        row = {
            "iteration": it,
            "steps": steps,
            "episodes": len(episodes),
            "mean_reward": mean_reward,
            "success_rate": float(np.mean([e.success for e in episodes])) if episodes else float("nan"),
            **stats,
        }
        result.curve.append(row)
        result.policy = policy
        if progress:
            progress(row)
        log.info("iter %d steps %d reward %.3f success %.3f", it, steps, row["mean_reward"], row["success_rate"])
        if out_dir:
            write_curve(result.curve, os.path.join(out_dir, "training_curve.csv"))
            if cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
                save_file(policy, os.path.join(out_dir, f"checkpoint_{it:04d}.pdl"))
    if out_dir:
        save_file(policy, os.path.join(out_dir, "policy.pdl"))
    return result


def _abort(policy: Policy, out_dir: Optional[str], reason: str):
    if out_dir:
        save_file(policy, os.path.join(out_dir, "diverged.pdl"))
    raise TrainingDiverged(reason)
