"""Training environments with a small gym-style interface.

``reset(seed) -> obs`` and ``step(action) -> (obs, reward, done, info)``.
``info`` always carries ``terminal_value``: the value credited after a
terminal step (zero except for a landing inside the target, see
``LandingEnv``), plus ``kind`` and ``success`` on the final step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..geometry import VehicleState
from ..runtime import SEARCHING, DetectionEvent, LoopState, RuntimeConfig, perceive
from ..sim import SimConfig, SimWorld
from ..sim.world import TERMINAL_LANDING, TERMINAL_NONE
from ..normalize import normalize_observation
from .rewards import ProgressTracker, RewardSpec, compute_reward

LOST = "lost"


@dataclass(frozen=True)
class LandingEnvSpec:
    sim: SimConfig = field(default_factory=SimConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)
    reward: RewardSpec = field(default_factory=RewardSpec)
    gamma: float = 0.99
    # end the episode once the hold window runs out without a detection
    lost_terminates: bool = True


class LandingEnv:
    """Simulator + perception pipeline + milestone rewards.

    The policy sees only the normalized observation extracted from the
    synthetic detection. Rewards are computed from simulator ground truth.
    A touchdown inside the target ends the episode; since a landed UAV stays
    in the target, the step is credited with the discounted value of
    staying there, ``stay_in_target / (1 - gamma)``, as its terminal value.
    """

    obs_dim = 3
    action_dim = 4

    def __init__(self, spec: LandingEnvSpec = LandingEnvSpec()):
        self.spec = spec
        self.spec.reward.validate()
        self.world = SimWorld(spec.sim)
        self.loop = LoopState()
        self.tracker: Optional[ProgressTracker] = None
        self.gimbal_cmd = 0.0
        self.obs = np.zeros(3)

    def _event(self, detection) -> DetectionEvent:
        w = self.world
        st = w.state
        veh = VehicleState(w.height_above_platform(), st.gimbal_pitch, w.forward_speed())
        return DetectionEvent(st.t, st.step_index, detection, veh)

    def reset(self, seed: int, **overrides) -> np.ndarray:
        self.world.reset(seed, **overrides)
        self.loop = LoopState()
        self.tracker = ProgressTracker.start(self.world.ground_truth(), self.spec.reward)
        obs, _, gimbal, self.loop = perceive(self.loop, self._event(self.world.detect()), self.spec.runtime)
        # a fresh spawn frames the platform, so only a dropped detection can leave us blind
        for _ in range(self.spec.runtime.hold_frames):
            if obs is not None:
                break
            r = self.world.step((0.0, 0.0, 0.0, 0.0))
            self.tracker = ProgressTracker.start(r.ground_truth, self.spec.reward)
            obs, _, gimbal, self.loop = perceive(self.loop, self._event(r.detection), self.spec.runtime)
        if obs is None:
            raise RuntimeError(f"no detection after reset with seed {seed}")
        self.gimbal_cmd = gimbal
        self.obs = normalize_observation(obs, self.spec.runtime.bounds)
        return self.obs

    def step(self, action):
        r = self.world.step(action, gimbal_pitch=self.gimbal_cmd)
        reward, self.tracker = compute_reward(self.tracker, r.ground_truth, self.spec.reward)
        info = {"terminal_value": 0.0}
        if r.terminal != TERMINAL_NONE:
            info["kind"] = r.terminal
            info["success"] = r.terminal == TERMINAL_LANDING and r.inside_target
            if info["success"]:
                info["terminal_value"] = self.spec.reward.stay_in_target / (1.0 - self.spec.gamma)
            info["offset"] = math.hypot(r.ground_truth.offset_along, r.ground_truth.offset_across)
            return self.obs, reward, True, info
        obs, _, gimbal, self.loop = perceive(self.loop, self._event(r.detection), self.spec.runtime)
        if obs is None:
            self.gimbal_cmd = self.world.state.gimbal_pitch
            if self.spec.lost_terminates and self.loop.phase == SEARCHING:
                info.update(kind=LOST, success=False)
                return self.obs, reward, True, info
            self.obs = np.zeros(3)
        else:
            self.gimbal_cmd = gimbal
            self.obs = normalize_observation(obs, self.spec.runtime.bounds)
        return self.obs, reward, False, info


class MoveToOriginEnv:
    """1-D smoke-test task: drive a point to the origin.

    Observation ``(p, 0, 0)``; only the first action component moves the
    point, by ``0.1 * a`` per step. Reaching ``|p| < 0.05`` succeeds. The
    reward is the progress toward the origin (×10) plus 1 on success.
    """

    obs_dim = 3
    action_dim = 4

    def __init__(self, max_steps: int = 50, goal: float = 0.05, step_size: float = 0.1):
        self.max_steps = max_steps
        self.goal = goal
        self.step_size = step_size
        self.p = 0.0
        self.t = 0

    def _obs(self):
        return np.array([self.p, 0.0, 0.0])

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self.p = float(rng.uniform(0.2, 1.0) * rng.choice([-1.0, 1.0]))
        self.t = 0
        return self._obs()

    def step(self, action):
        before = abs(self.p)
        self.p = float(np.clip(self.p + self.step_size * float(action[0]), -1.0, 1.0))
        self.t += 1
        reward = 10.0 * (before - abs(self.p))
        info = {"terminal_value": 0.0}
        if abs(self.p) < self.goal:
            info.update(kind="goal", success=True)
            return self._obs(), reward + 1.0, True, info
        if self.t >= self.max_steps:
            info.update(kind="timeout", success=False)
            return self._obs(), reward, True, info
        return self._obs(), reward, False, info
