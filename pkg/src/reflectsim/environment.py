"""Cooperative multi-agent environment over focal points.

Agent ``l`` owns segment ``l`` of the array and one focal point. Each step it
nudges the focal point by a bounded 3-D displacement; the segment's tiles
re-orient to reflect the access point through the new focal point and every
agent is paid the mean RSSI over all users plus the RSSI of its own user.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidConfiguration
from .geometry import AngleLimits, ArrayLayout, apply_focal_points, reflect, unit
from .propagation import Box, PowerModel, RadiationModel, Scene, flat_configuration

OBS_DIM = 9
ACT_DIM = 3
TILE_MODES = ("focal", "column", "flat", "none")


@dataclass(frozen=True)
class EnvConfig:
    num_agents: int = 3
    num_users: int = 3
    assignment: tuple = (0, 1, 2)
    delta_max: float = 1.0
    episode_length: int = 100
    mobility_period: int = 4
    mobility_radius: float = 1.5
    user_region: Box = None
    noise_sigma: float = 0.0
    seed: int = 0
    reward_offset: float = -160.0
    reward_scale: float = 4.0

    def __post_init__(self):
        if self.num_agents < 1 or self.num_users < 1:
            raise InvalidConfiguration("need at least one agent and one user")
        if len(self.assignment) != self.num_agents:
            raise InvalidConfiguration("assignment must name one user per agent")
        if any(not 0 <= k < self.num_users for k in self.assignment):
            raise InvalidConfiguration("assignment refers to an unknown user")
        if self.delta_max <= 0:
            raise InvalidConfiguration("delta_max must be positive")
        if self.episode_length < 1 or self.mobility_period < 0:
            raise InvalidConfiguration("episode_length must be >= 1 and mobility_period >= 0")
        if self.noise_sigma < 0:
            raise InvalidConfiguration("noise_sigma must be non-negative")
        if self.reward_scale <= 0:
            raise InvalidConfiguration("reward_scale must be positive")


@dataclass
class EnvState:
    user_positions: np.ndarray
    focal_points: np.ndarray
    step_index: int
    home_positions: np.ndarray

    def copy(self) -> "EnvState":
        return EnvState(self.user_positions.copy(), self.focal_points.copy(),
                        self.step_index, self.home_positions.copy())


def reward(rssi_per_user, assignment, agent: int) -> float:
    """Hybrid reward: mean RSSI over all users plus the agent's own user."""
    p = np.asarray(rssi_per_user, dtype=float)
    return float(p.mean() + p[assignment[agent]])


def rewards_all(rssi_per_user, assignment) -> np.ndarray:
    p = np.asarray(rssi_per_user, dtype=float)
    return p.mean() + p[np.asarray(assignment)]


def perturb_positions(positions, sigma: float, rng: np.random.Generator) -> np.ndarray:
    positions = np.asarray(positions, dtype=float)
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return positions.copy()
    return positions + rng.normal(0.0, sigma, size=positions.shape)


def global_state(state: EnvState, layout: ArrayLayout, bounds: Box) -> np.ndarray:
    """Critic input: all users, all focal points, all segment centroids (3K + 6L)."""
    parts = [state.user_positions, state.focal_points, layout.segment_centroids()]
    return np.clip(bounds.normalize(np.concatenate(parts)).ravel(), -1.0, 1.0)


class ReflectorEnv:
    """One simulated hallway.

    ``tile_mode`` selects how tile normals follow from the focal points:
    ``focal`` (per-tile mirror normals), ``column`` (column-shared azimuth),
    ``flat`` (rest normals, focal points ignored) or ``none`` (no array).
    """

    def __init__(self, scene: Scene, layout: ArrayLayout, limits: AngleLimits,
                 model: RadiationModel, config: EnvConfig, tile_mode: str = "focal"):
        if tile_mode not in TILE_MODES:
            raise ValueError(f"unknown tile mode {tile_mode!r}")
        if layout.n_segments != config.num_agents:
            raise InvalidConfiguration(
                f"layout has {layout.n_segments} segments but config has {config.num_agents} agents")
        region = config.user_region if config.user_region is not None else scene.focal_region
        if np.any(region.lo > region.hi):
            raise InvalidConfiguration("user region is empty")
        self.scene = scene
        self.layout = layout
        self.limits = limits
        self.model = model
        self.config = replace(config, user_region=region)
        self.tile_mode = tile_mode
        self.power = PowerModel(scene, layout if tile_mode != "none" else None, model)
        self._centroids = layout.segment_centroids()
        self._assign = np.asarray(config.assignment)
        self.state: EnvState | None = None
        self.last_rssi: np.ndarray | None = None
        self.last_obs: np.ndarray | None = None
        self.done = False
        self._flat = flat_configuration(layout)

    # -- dimensions ------------------------------------------------------
    @property
    def num_agents(self) -> int:
        return self.config.num_agents

    @property
    def obs_dim(self) -> int:
        return OBS_DIM

    @property
    def act_dim(self) -> int:
        return ACT_DIM

    @property
    def state_dim(self) -> int:
        return 3 * self.config.num_users + 6 * self.config.num_agents

    # -- dynamics --------------------------------------------------------
    def initial_focal_points(self) -> np.ndarray:
        """Point along each segment's flat specular ray, as far out as the user-region centre."""
        target = self.config.user_region.center
        out = np.empty((self.num_agents, 3))
        for l, c in enumerate(self._centroids):
            ray = reflect(unit(c - self.scene.ap_position), self.layout.rest_normal)
            out[l] = self.scene.focal_region.clip(c + np.linalg.norm(target - c) * ray)
        return out

    def reset(self, seed: int | None = None, users=None):
        """Start an episode; ``users`` pins the home positions instead of sampling them."""
        seed = self.config.seed if seed is None else seed
        user_ss, noise_ss = np.random.SeedSequence(seed).spawn(2)
        self._user_rng = np.random.default_rng(user_ss)
        self._noise_rng = np.random.default_rng(noise_ss)
        region = self.config.user_region
        if users is None:
            homes = self._user_rng.uniform(region.lo, region.hi, size=(self.config.num_users, 3))
        else:
            homes = np.asarray(users, dtype=float).reshape(self.config.num_users, 3)
        self.state = EnvState(homes.copy(), self.initial_focal_points(), 0, homes.copy())
        self.last_rssi = None
        self.done = False
        self.last_obs = self.observe()
        return self.state.copy(), self.last_obs

    def tile_normals(self, focal=None):
        if self.tile_mode == "none":
            return None
        if self.tile_mode == "flat":
            return self._flat
        focal = self.state.focal_points if focal is None else focal
        return apply_focal_points(self.layout, focal, self.scene.ap_position, self.limits,
                                  column_constrained=self.tile_mode == "column")

    def user_rssi(self, focal=None, users=None) -> np.ndarray:
        users = self.state.user_positions if users is None else users
        return self.power.rssi(self.tile_normals(focal), users)

    def _move_users(self):
        cfg = self.config
        k = cfg.num_users
        radius = cfg.mobility_radius * np.sqrt(self._user_rng.uniform(size=k))
        angle = self._user_rng.uniform(0.0, 2 * np.pi, size=k)
        step = np.stack([radius * np.cos(angle), radius * np.sin(angle), np.zeros(k)], axis=-1)
        self.state.user_positions = cfg.user_region.clip(self.state.home_positions + step)

    def observe(self) -> np.ndarray:
        """Per-agent observations, shape ``(L, 9)``: own user, own centroid, own focal point."""
        seen = perturb_positions(self.state.user_positions, self.config.noise_sigma, self._noise_rng)
        bounds = self.scene.bounds
        obs = np.concatenate([
            bounds.normalize(seen[self._assign]),
            bounds.normalize(self._centroids),
            bounds.normalize(self.state.focal_points),
        ], axis=1)
        return np.clip(obs, -1.0, 1.0)

    def global_state(self) -> np.ndarray:
        return global_state(self.state, self.layout, self.scene.bounds)

    @property
    def agent_state_index(self) -> np.ndarray:
        """Per-agent reordering of the global state, shape ``(L, 3K + 6L)``.

        Row ``l`` lists the assigned user first, then agent ``l``'s focal point
        and centroid first, each followed by the rest in index order.
        """
        k, n = self.config.num_users, self.num_agents

        def blocks(first, count, offset):
            order = [first] + [i for i in range(count) if i != first]
            return [3 * (offset + b) + j for b in order for j in range(3)]

        return np.array([blocks(int(self._assign[l]), k, 0) + blocks(l, n, k) + blocks(l, n, k + n)
                         for l in range(n)])

    def clip_actions(self, actions) -> np.ndarray:
        actions = np.asarray(actions, dtype=float)
        if actions.shape != (self.num_agents, ACT_DIM):
            raise ValueError(f"expected actions of shape {(self.num_agents, ACT_DIM)}, got {actions.shape}")
        d = self.config.delta_max
        return np.clip(actions, -d, d)

    def step(self, actions):
        """Apply one displacement per agent.

        Returns ``(state, observations, rewards, done, info)``; rewards are the
        rescaled hybrid rewards and ``info`` carries raw RSSI and raw rewards.
        """
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        cfg = self.config
        a = self.clip_actions(actions)
        st = self.state
        st.focal_points = self.scene.focal_region.clip(st.focal_points + a)
        p = self.user_rssi()
        raw = rewards_all(p, self._assign)
        scaled = (raw - cfg.reward_offset) / cfg.reward_scale
        done = st.step_index + 1 >= cfg.episode_length
        st.step_index += 1
        if cfg.mobility_period and st.step_index % cfg.mobility_period == 0:
            self._move_users()
        self.last_rssi = p
        self.done = done
        self.last_obs = self.observe()
        info = {"rssi": p, "raw_rewards": raw}
        return st.copy(), self.last_obs, scaled, done, info
