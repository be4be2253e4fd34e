"""Rollout storage and generalized advantage estimation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np


@dataclass
class Trajectory:
    """Time-major rollout buffer; every array has leading shape (T, n_envs).

    ``actions`` holds the pre-squash Gaussian samples and ``log_probs`` their
    Gaussian log-density. The tanh Jacobian depends only on the sample, so
    it cancels in the PPO ratio and is not stored.
    ``terminal_values`` is the value credited after a terminal step (zero
    for ordinary terminations).
    """

    observations: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    terminal_values: np.ndarray
    last_values: np.ndarray  # bootstrap V(s_T) per env
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.rewards.size

    def flat(self) -> dict:
        """Batch-major arrays for the update step."""
        if self.advantages is None:
            raise ValueError("compute advantages before flattening")
        n = len(self)
        return {
            "obs": self.observations.reshape(n, -1),
            "u": self.actions.reshape(n, -1),
            "log_probs": self.log_probs.reshape(n),
            "advantages": self.advantages.reshape(n),
            "returns": self.returns.reshape(n),
            "values": self.values.reshape(n),
        }


def gae(rewards, values, dones, last_value, gamma: float, lam: float,
        terminal_values=None) -> Tuple[np.ndarray, np.ndarray]:
    """Advantages and returns along axis 0.

    ``dones[t]`` marks that step ``t`` ended an episode, so nothing is
    bootstrapped across it except ``terminal_values[t]``.
    """
    if not 0 < gamma <= 1 or not 0 <= lam <= 1:
        raise ValueError(f"need 0 < gamma <= 1 and 0 <= lambda <= 1, got {gamma}, {lam}")
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    tv = np.zeros_like(rewards) if terminal_values is None else np.asarray(terminal_values, dtype=float)
    adv = np.zeros_like(rewards)
    next_value = np.asarray(last_value, dtype=float)
    running = np.zeros_like(next_value)
    for t in range(rewards.shape[0] - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * (live * next_value + dones[t] * tv[t]) - values[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


def gae_advantages(traj: Trajectory, gamma: float, lam: float) -> Trajectory:
    traj.advantages, traj.returns = gae(traj.rewards, traj.values, traj.dones, traj.last_values, gamma, lam,
                                        traj.terminal_values)
    return traj
