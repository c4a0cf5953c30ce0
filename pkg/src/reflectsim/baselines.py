"""Comparison arms.

``beam_focusing_sa`` drives the same environment through one centralised
agent; ``column_based_ma`` keeps the multi-agent controller but forces every
tile in a column onto one azimuth; ``flat`` and ``none`` are fixed
configurations with nothing to learn.
"""
from __future__ import annotations

import enum

import numpy as np

from .geometry import ArrayLayout, column_constrain
from .propagation import PowerModel, RadiationModel, Scene, flat_configuration


class BaselineKind(str, enum.Enum):
    BEAM_FOCUSING_MA = "beam_focusing_ma"
    BEAM_FOCUSING_SA = "beam_focusing_sa"
    COLUMN_BASED_MA = "column_based_ma"
    FLAT = "flat"
    NONE = "none"

    def __str__(self) -> str:
        return self.value

    @property
    def learned(self) -> bool:
        return self not in (BaselineKind.FLAT, BaselineKind.NONE)

    @property
    def tile_mode(self) -> str:
        return {"column_based_ma": "column", "flat": "flat", "none": "none"}.get(self.value, "focal")


ALL_KINDS = tuple(BaselineKind)


class SingleAgentAdapter:
    """Expose an L-agent environment as one agent.

    The agent observes the global state and emits all ``3L`` displacements at
    once; its reward is twice the mean user RSSI, rescaled like the per-agent
    rewards.
    """

    def __init__(self, env):
        self.env = env

    num_agents = 1

    @property
    def config(self):
        return self.env.config

    @property
    def obs_dim(self) -> int:
        return self.env.state_dim

    @property
    def act_dim(self) -> int:
        return 3 * self.env.num_agents

    @property
    def state_dim(self) -> int:
        return self.env.state_dim

    @property
    def state(self):
        return self.env.state

    @state.setter
    def state(self, value):
        self.env.state = value

    @property
    def done(self) -> bool:
        return self.env.done

    @property
    def last_obs(self):
        return self.env.global_state()[None, :]

    def global_state(self):
        return self.env.global_state()

    @property
    def agent_state_index(self):
        return np.arange(self.state_dim)[None, :]

    def reset(self, seed=None, users=None):
        state, _ = self.env.reset(seed, users=users)
        return state, self.last_obs

    def step(self, actions):
        joint = np.asarray(actions, dtype=float).reshape(self.env.num_agents, 3)
        state, _, _, done, info = self.env.step(joint)
        cfg = self.env.config
        p = info["rssi"]
        raw = 2.0 * float(np.mean(p))
        info = {**info, "raw_rewards": np.array([raw])}
        scaled = np.array([(raw - cfg.reward_offset) / cfg.reward_scale])
        return state, self.last_obs, scaled, done, info


def single_agent_adapter(env) -> SingleAgentAdapter:
    return SingleAgentAdapter(env)


def column_adapter(phi, theta, layout: ArrayLayout):
    return column_constrain(phi, theta, layout)


def static_eval(kind, scene: Scene, layout: ArrayLayout, users, model: RadiationModel) -> np.ndarray:
    """Per-user RSSI (dBm) for the fixed ``flat`` or ``none`` configurations."""
    kind = BaselineKind(kind)
    if kind is BaselineKind.FLAT:
        return PowerModel(scene, layout, model).rssi(flat_configuration(layout), users)
    if kind is BaselineKind.NONE:
        return PowerModel(scene, None, model).rssi(None, users)
    raise ValueError(f"{kind} is not a static baseline")


def evaluate_static(env, steps: int, seed: int, users=None) -> np.ndarray:
    """Same row layout as :func:`reflectsim.marl.evaluate` for a fixed configuration."""
    env.reset(seed, users=users)
    zero = np.zeros((env.num_agents, 3))
    rows = np.empty((steps, env.config.num_users + 1))
    for t in range(steps):
        _, _, _, _, info = env.step(zero)
        rows[t, :-1] = info["rssi"]
        rows[t, -1] = np.mean(info["rssi"])
    return rows
