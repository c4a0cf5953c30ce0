"""Glue between configs, environments and the trainer."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .baselines import BaselineKind, SingleAgentAdapter, evaluate_static
from .config import ExperimentConfig
from .environment import ReflectorEnv
from .marl import Trainer, TrainingLog, evaluate, train


def make_env(cfg: ExperimentConfig, kind=None, episode_length: int | None = None,
             noise_sigma: float | None = None, layout=None):
    kind = BaselineKind(kind if kind is not None else cfg.algo)
    env_cfg = cfg.env
    if episode_length is not None:
        env_cfg = replace(env_cfg, episode_length=episode_length)
    if noise_sigma is not None:
        env_cfg = replace(env_cfg, noise_sigma=noise_sigma)
    env = ReflectorEnv(cfg.scene, layout or cfg.layout(), cfg.limits, cfg.radiation, env_cfg,
                       tile_mode=kind.tile_mode)
    if kind is BaselineKind.BEAM_FOCUSING_SA:
        return SingleAgentAdapter(env)
    return env


def new_trainer(cfg: ExperimentConfig, kind, seed: int) -> Trainer:
    env = make_env(cfg, kind)
    return Trainer(env.num_agents, env.obs_dim, env.act_dim, env.state_dim, cfg.ppo, seed,
                   cfg.env.delta_max, str(BaselineKind(kind)))


def train_arm(cfg: ExperimentConfig, kind, seed: int, progress=None) -> tuple[Trainer, TrainingLog]:
    kind = BaselineKind(kind)
    if not kind.learned:
        raise ValueError(f"{kind} has nothing to train")
    env = make_env(cfg, kind)
    trainer = new_trainer(cfg, kind, seed)
    return train(env, cfg.ppo, seed, trainer=trainer, progress=progress)


def eval_seed(seed: int) -> list:
    """Evaluation episodes draw from a stream disjoint from training episodes."""
    return [seed, 1_000_000_007]


def evaluate_arm(cfg: ExperimentConfig, kind, trainer: Trainer | None, seed: int,
                 steps: int | None = None, noise_sigma: float = 0.0, users=None) -> np.ndarray:
    """Evaluation rows ``(steps, K + 1)``: per-user RSSI then the mean, in dBm.

    Users wander around the scene's anchor positions unless ``users`` is given.
    """
    kind = BaselineKind(kind)
    if users is None and len(cfg.scene.users) == cfg.env.num_users:
        users = cfg.scene.users
    steps = cfg.eval_length if steps is None else steps
    env = make_env(cfg, kind, episode_length=steps, noise_sigma=noise_sigma)
    if kind.learned:
        return evaluate(trainer, env, steps, eval_seed(seed), users=users)
    return evaluate_static(env, steps, eval_seed(seed), users=users)


def settle_focal_points(cfg: ExperimentConfig, kind, trainer: Trainer, users, steps: int | None = None,
                        seed: int = 0) -> np.ndarray:
    """Run the deterministic policy with users pinned in place; return the final focal points."""
    kind = BaselineKind(kind)
    steps = cfg.env.episode_length if steps is None else steps
    env = make_env(replace(cfg, env=replace(cfg.env, mobility_period=0)), kind, episode_length=steps)
    trainer.check_compatible(env)
    env.reset(eval_seed(seed), users=users)
    obs = env.last_obs
    for _ in range(steps):
        actions, _ = trainer.act(obs, deterministic=True)
        _, obs, _, _, _ = env.step(np.clip(actions, -trainer.delta_max, trainer.delta_max))
    return env.state.focal_points.copy()


def episode_reward_from_rows(cfg: ExperimentConfig, rows: np.ndarray) -> float:
    """Mean per-agent cumulative reward of the first training-length stretch of an eval run."""
    p = rows[:cfg.env.episode_length, :-1]
    assign = np.asarray(cfg.env.assignment)
    raw = p.mean(axis=1, keepdims=True) + p[:, assign]
    scaled = (raw - cfg.env.reward_offset) / cfg.env.reward_scale
    return float(scaled.sum(axis=0).mean())
