"""PPO training: rewards, normalization, rollouts, GAE and the update step."""

from .envs import LOST, LandingEnv, LandingEnvSpec, MoveToOriginEnv
from .gae import Trajectory, gae, gae_advantages
from .loop import (
    EpisodeRecord,
    TrainResult,
    VecEnv,
    collect_rollout,
    episode_seed,
    read_curve,
    smoothed_returns,
    train,
    write_curve,
)
from ..normalize import NormalizationBounds, SaturationStats, normalize_observation
from .ppo import Adam, TrainConfig, TrainingDiverged, ppo_loss, ppo_update
from .rewards import ProgressTracker, RewardSpec, compute_reward, in_target_volume
