"""Clipped-surrogate PPO with hand-written gradients and Adam."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from ..policy import Policy, gaussian_entropy, gaussian_log_prob
from .gae import Trajectory


class TrainingDiverged(RuntimeError):
    """Raised when a loss or reward turns non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_epsilon: float = 0.2
    learning_rate: float = 3e-4
    rollout_length: int = 2048  # steps per env per iteration
    n_envs: int = 8
    epochs: int = 4
    minibatch_size: int = 512
    total_steps: int = 3_000_000
    entropy_coef: float = 0.005
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    seed: int = 0
    hidden: Tuple[int, ...] = (64, 64)
    log_std_init: float = -0.5
    checkpoint_every: int = 20  # iterations

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(self.hidden))

    def validate(self) -> "TrainConfig":
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0 <= self.lam <= 1:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")
        if self.clip_epsilon <= 0:
            raise ValueError("clip epsilon must be positive")
        if min(self.rollout_length, self.n_envs, self.epochs, self.minibatch_size) <= 0:
            raise ValueError("rollout length, env count, epochs and minibatch size must be positive")
        if self.total_steps < 0:
            raise ValueError("total steps must be non-negative")
        return self

    @property
    def batch_size(self) -> int:
        return self.rollout_length * self.n_envs


class Adam:
    def __init__(self, n: int, lr: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Return updated parameters; ``params`` is not modified."""
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def ppo_loss(policy: Policy, batch: Dict[str, np.ndarray], cfg: TrainConfig):
    """Total PPO loss, its flat gradient and diagnostics for one minibatch.

    loss = -mean(min(r·A, clip(r, 1±ε)·A)) + value_coef·0.5·mean((V - R)²)
           - entropy_coef·H, with H the (pre-squash) Gaussian entropy.
    """
    obs, u, logp_old = batch["obs"], batch["u"], batch["log_probs"]
    adv, ret = batch["advantages"], batch["returns"]
    n = obs.shape[0]
    eps = cfg.clip_epsilon
    means, values, cache = policy.forward_batch(obs)
    log_std = policy.log_std
    inv_var = np.exp(-2.0 * log_std)
    diff = u - means
    logp = gaussian_log_prob(means, log_std, u)
    ratio = np.exp(logp - logp_old)
    surr1 = ratio * adv
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps)
    surr2 = clipped * adv
    policy_loss = -np.mean(np.minimum(surr1, surr2))
    value_loss = 0.5 * np.mean((values - ret) ** 2)
    entropy = gaussian_entropy(log_std)
    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy

    # d(-min)/d ratio: the unclipped branch always carries A; the clipped one only inside the band
    unclipped = surr1 <= surr2
    inside = (ratio >= 1.0 - eps) & (ratio <= 1.0 + eps)
    g_ratio = np.where(unclipped | inside, adv, 0.0)
    g_logp = -g_ratio * ratio / n
    g_mean = g_logp[:, None] * diff * inv_var
    g_log_std = np.sum(g_logp[:, None] * (diff * diff * inv_var - 1.0), axis=0) - cfg.entropy_coef
    g_value = cfg.value_coef * (values - ret) / n
    grad = policy.backward(cache, g_mean, g_value, g_log_std)

    stats = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy),
        "approx_kl": float(np.mean(logp_old - logp)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > eps)),
    }
    return float(loss), grad, stats


def clip_grad(grad: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.linalg.norm(grad))
    if max_norm > 0 and norm > max_norm:
        return grad * (max_norm / norm)
    return grad


def ppo_update(policy: Policy, traj: Trajectory, cfg: TrainConfig, optimizer: Adam,
               rng: np.random.Generator) -> Tuple[Policy, Dict[str, float]]:
    """Run ``cfg.epochs`` passes of minibatch PPO over ``traj``.

    Advantages are normalized once over the whole batch. On a non-finite
    loss the update aborts with ``TrainingDiverged`` and the caller keeps
    the previous policy.
    """
    data = traj.flat()
    adv = data["advantages"]
    data["advantages"] = (adv - adv.mean()) / (adv.std() + 1e-8)
    n = adv.size
    mb = min(cfg.minibatch_size, n)
    params = policy.params.copy()
    current = policy
    totals: Dict[str, float] = {}
    count = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n - mb + 1, mb):
            idx = order[start:start + mb]
            batch = {k: v[idx] for k, v in data.items()}
            loss, grad, stats = ppo_loss(current, batch, cfg)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingDiverged(f"non-finite loss: {stats}")
            params = optimizer.step(params, clip_grad(grad, cfg.max_grad_norm))
            current = policy.with_params(params)
            for k, v in stats.items():
                totals[k] = totals.get(k, 0.0) + v
            count += 1
    return current, {k: v / max(count, 1) for k, v in totals.items()}
