"""MAPPO with one actor per agent and a shared centralized critic.

Actors see only their own observation. The critic sees the global state
during training, reordered per agent so that the agent's own user, focal
point and centroid come first; one network then gives every agent its own
baseline under the per-agent rewards. Critic targets are standardised with
running statistics.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, IncompatibleCheckpoint
from .neural import (AdamState, DenseNet, GaussianHead, adam_step, backward, forward,
                     log_prob_grads, log_prob_of, policy_sample)

log = logging.getLogger(__name__)

HIDDEN = (256, 256)


@dataclass(frozen=True)
class PPOHyper:
    lr: float = 2.0e-4
    gamma: float = 0.985
    gae_lambda: float = 0.9
    clip_eps: float = 0.2
    value_coef: float = 0.5
    entropy_coef: float = 1.0e-4
    rollout_size: int = 1000
    minibatch: int = 200
    epochs_per_update: int = 10
    episodes: int = 3000

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 < self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must lie in (0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        if not 0 < self.minibatch <= self.rollout_size:
            raise ValueError("minibatch must lie in (0, rollout_size]")
        if self.episodes < 0 or self.epochs_per_update < 1:
            raise ValueError("episodes must be >= 0 and epochs_per_update >= 1")


class RunningNorm:
    """Running mean/variance merged batch by batch (Chan et al.)."""

    def __init__(self, mean=0.0, var=1.0, count=0.0):
        self.mean = float(mean)
        self.var = float(var)
        self.count = float(count)

    @property
    def std(self) -> float:
        return float(np.sqrt(max(self.var, 1e-8)))

    def update(self, x):
        x = np.asarray(x, dtype=float).ravel()
        n = x.size
        if n == 0:
            return
        b_mean, b_var = x.mean(), x.var()
        if self.count == 0:
            self.mean, self.var, self.count = float(b_mean), float(b_var), float(n)
            return
        total = self.count + n
        delta = b_mean - self.mean
        m2 = self.var * self.count + b_var * n + delta**2 * self.count * n / total
        self.mean = float(self.mean + delta * n / total)
        self.var = float(m2 / total)
        self.count = float(total)


class Trainer:
    """Actors, heads, critic and optimizer state for ``n_agents`` agents."""

    def __init__(self, n_agents: int, obs_dim: int, act_dim: int, state_dim: int,
                 hyper: PPOHyper = PPOHyper(), seed: int = 0, delta_max: float = 1.0,
                 algo: str = "beam_focusing_ma", hidden=HIDDEN):
        init_ss, sample_ss = np.random.SeedSequence(seed).spawn(2)
        init_rng = np.random.default_rng(init_ss)
        self.n_agents = n_agents
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.state_dim = state_dim
        self.hyper = hyper
        self.seed = seed
        self.delta_max = delta_max
        self.algo = algo
        self.actors = [DenseNet([obs_dim, *hidden, act_dim], init_rng, out_gain=0.01)
                       for _ in range(n_agents)]
        self.heads = [GaussianHead(np.full(act_dim, np.log(0.25 * delta_max)))
                      for _ in range(n_agents)]
        self.critic = DenseNet([state_dim, *hidden, 1], init_rng, out_gain=1.0)
        self.actor_opt = [AdamState.zeros_like(a.params + [h.log_std])
                          for a, h in zip(self.actors, self.heads)]
        self.critic_opt = AdamState.zeros_like(self.critic.params)
        self.value_norm = RunningNorm()
        self.episodes_done = 0
        self.rng = np.random.default_rng(sample_ss)

    # -- acting ----------------------------------------------------------
    def act(self, obs, deterministic: bool = False):
        """One action per agent from that agent's own observation row."""
        obs = np.asarray(obs, dtype=float)
        actions = np.empty((self.n_agents, self.act_dim))
        logps = np.zeros(self.n_agents)
        for l, (actor, head) in enumerate(zip(self.actors, self.heads)):
            mean = actor(obs[l])
            if deterministic:
                actions[l] = mean
            else:
                actions[l], logps[l] = policy_sample(head, mean, self.rng)
        return actions, logps

    def value(self, gstate) -> np.ndarray:
        gstate = np.asarray(gstate, dtype=float)
        v = self.critic(gstate.reshape(-1, gstate.shape[-1]))[:, 0].reshape(gstate.shape[:-1])
        return v * self.value_norm.std + self.value_norm.mean

    def check_compatible(self, env):
        want = (env.num_agents, env.obs_dim, env.act_dim, env.state_dim)
        have = (self.n_agents, self.obs_dim, self.act_dim, self.state_dim)
        if want != have:
            raise IncompatibleCheckpoint(
                f"checkpoint has (agents, obs, act, state) = {have}, environment needs {want}")


@dataclass
class RolloutBuffer:
    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    states: np.ndarray
    bootstrap_value: float = 0.0
    views: np.ndarray | None = None          # per-agent index into a state row
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def prepared(self) -> bool:
        return self.advantages is not None

    def agent_states(self, idx=slice(None)) -> np.ndarray:
        """States seen by the critic for each agent, shape ``(n, L, state_dim)``."""
        states = self.states[idx]
        n_agents = self.rewards.shape[1]
        views = self.views if self.views is not None else \
            np.tile(np.arange(states.shape[-1]), (n_agents, 1))
        return states[:, views]


def state_views(env) -> np.ndarray:
    """Index array mapping a global state to each agent's critic input."""
    views = getattr(env, "agent_state_index", None)
    return np.arange(env.state_dim)[None, :].repeat(env.num_agents, 0) if views is None else views


@dataclass
class EpisodeTracker:
    cumulative: np.ndarray
    rssi_sum: float = 0.0
    steps: int = 0
    finished: list = field(default_factory=list)


def gae(rewards, values, dones, bootstrap_value, gamma: float, lam: float):
    """Generalized advantage estimates and returns along axis 0."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    if not (rewards.shape[0] == values.shape[0] == dones.shape[0]):
        raise ValueError("rewards, values and dones differ in length")
    n = rewards.shape[0]
    adv = np.zeros_like(rewards)
    next_value = np.broadcast_to(np.asarray(bootstrap_value, dtype=float), rewards.shape[1:])
    last = np.zeros(rewards.shape[1:])
    for t in range(n - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        last = delta + gamma * lam * live * last
        adv[t] = last
        next_value = values[t]
    return adv, adv + values


def collect(env, trainer: Trainer, horizon: int, tracker: EpisodeTracker | None = None,
            episode_seed=None, max_episodes: int | None = None) -> RolloutBuffer:
    """Run the current policies for ``horizon`` steps (fewer if the episode cap is hit).

    ``episode_seed(i)`` gives the reset seed of episode ``i``; episodes reset on done.
    """
    L, od, ad, sd = trainer.n_agents, trainer.obs_dim, trainer.act_dim, trainer.state_dim
    if tracker is None:
        tracker = EpisodeTracker(np.zeros(L))
    seed_of = episode_seed or (lambda i: [trainer.seed, i])
    if env.state is None or env.done:
        env.reset(seed_of(trainer.episodes_done))
    obs_b = np.empty((horizon, L, od))
    act_b = np.empty((horizon, L, ad))
    logp_b = np.empty((horizon, L))
    rew_b = np.empty((horizon, L))
    val_b = np.empty((horizon, L))
    views = state_views(env)
    done_b = np.zeros(horizon)
    st_b = np.empty((horizon, sd))
    obs = env.last_obs
    t = 0
    while t < horizon:
        gs = env.global_state()
        actions, _ = trainer.act(obs)
        _, next_obs, rewards, done, info = env.step(actions)
        obs_b[t], act_b[t], rew_b[t] = obs, actions, rewards
        st_b[t] = gs
        done_b[t] = float(done)
        tracker.cumulative += rewards
        tracker.rssi_sum += float(np.mean(info["rssi"]))
        tracker.steps += 1
        t += 1
        if done:
            tracker.finished.append((tracker.cumulative.copy(), tracker.rssi_sum / tracker.steps))
            tracker.cumulative[:] = 0.0
            tracker.rssi_sum, tracker.steps = 0.0, 0
            trainer.episodes_done += 1
            if max_episodes is not None and trainer.episodes_done >= max_episodes:
                break
            env.reset(seed_of(trainer.episodes_done))
            next_obs = env.last_obs
        obs = next_obs
    # score the stored actions with the same batched pass the update uses, so the
    # first-epoch ratio is exactly one (single-row matmuls can differ in the last bit)
    for l, (actor, head) in enumerate(zip(trainer.actors, trainer.heads)):
        logp_b[:t, l] = log_prob_of(head, actor(obs_b[:t, l]), act_b[:t, l])
    val_b[:t] = trainer.value(st_b[:t][:, views])
    buf = RolloutBuffer(obs_b[:t], act_b[:t], logp_b[:t], rew_b[:t], val_b[:t], done_b[:t], st_b[:t],
                        views=views)
    buf.bootstrap_value = 0.0 if done_b[t - 1] else trainer.value(env.global_state()[views])
    return buf


def prepare(buffer: RolloutBuffer, hyper: PPOHyper):
    """Fill advantages (normalised per agent) and returns."""
    values = buffer.values if buffer.values.ndim == 2 else buffer.values[:, None]
    adv, ret = gae(buffer.rewards, values, buffer.dones[:, None],
                   buffer.bootstrap_value, hyper.gamma, hyper.gae_lambda)
    buffer.returns = ret
    std = adv.std(axis=0)
    buffer.advantages = (adv - adv.mean(axis=0)) / np.where(std > 0, std, 1.0)
    return buffer


def surrogate_terms(ratio, adv, clip_eps: float):
    """Per-sample clipped objective and ``d objective / d log_prob``."""
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
    active = unclipped <= clipped
    return np.minimum(unclipped, clipped), np.where(active, unclipped, 0.0)


def actor_loss_and_grads(actor: DenseNet, head: GaussianHead, obs, actions, old_logp, adv,
                         hyper: PPOHyper):
    mean, cache = forward(actor, obs)
    logp = log_prob_of(head, mean, actions)
    ratio = np.exp(logp - old_logp)
    objective, d_obj = surrogate_terms(ratio, adv, hyper.clip_eps)
    n = len(adv)
    loss = -objective.mean() - hyper.entropy_coef * head.entropy()
    g_logp = -d_obj / n
    d_mean, d_logstd = log_prob_grads(head, mean, actions)
    grads = backward(actor, cache, g_logp[:, None] * d_mean)
    g_std = (g_logp[:, None] * d_logstd).sum(axis=0) - hyper.entropy_coef
    kl = float(np.mean(old_logp - logp))
    return loss, grads.params + [g_std], ratio, kl


def ppo_update(trainer: Trainer, buffer: RolloutBuffer, hyper: PPOHyper | None = None,
               rng: np.random.Generator | None = None) -> dict:
    """Clipped-surrogate epochs over shuffled minibatches; returns loss statistics."""
    if not buffer.prepared:
        raise ContractViolation("buffer advantages are missing; run prepare() first")
    hyper = hyper or trainer.hyper
    rng = rng or trainer.rng
    n = len(buffer)
    targets = buffer.returns
    trainer.value_norm.update(targets)
    norm_targets = (targets - trainer.value_norm.mean) / trainer.value_norm.std
    mb = min(hyper.minibatch, n)
    actor_losses = np.zeros(trainer.n_agents)
    critic_losses, kls, epoch_ratios = [], [], []
    for epoch in range(hyper.epochs_per_update):
        order = rng.permutation(n)
        a_loss = np.zeros(trainer.n_agents)
        c_loss, n_mb, ratio_sum = 0.0, 0, 0.0
        for start in range(0, n - mb + 1, mb):
            idx = order[start:start + mb]
            for l, (actor, head) in enumerate(zip(trainer.actors, trainer.heads)):
                loss, grads, ratio, kl = actor_loss_and_grads(
                    actor, head, buffer.obs[idx, l], buffer.actions[idx, l],
                    buffer.log_probs[idx, l], buffer.advantages[idx, l], hyper)
                adam_step(actor.params + [head.log_std], grads, trainer.actor_opt[l], hyper.lr)
                head.clamp()
                actor.touch()
                a_loss[l] += loss
                ratio_sum += ratio.mean() / trainer.n_agents
                kls.append(kl)
            x = buffer.agent_states(idx).reshape(-1, trainer.state_dim)
            v, cache = forward(trainer.critic, x)
            err = v[:, 0] - norm_targets[idx].ravel()
            c_loss += hyper.value_coef * float(np.mean(err**2))
            grads = backward(trainer.critic, cache, (2.0 * hyper.value_coef / len(err)) * err[:, None])
            adam_step(trainer.critic.params, grads.params, trainer.critic_opt, hyper.lr)
            trainer.critic.touch()
            n_mb += 1
        actor_losses = a_loss / n_mb
        critic_losses.append(c_loss / n_mb)
        epoch_ratios.append(ratio_sum / n_mb)
    return {
        "actor_loss": actor_losses,
        "critic_loss": critic_losses[-1],
        "critic_loss_by_epoch": critic_losses,
        "mean_ratio_by_epoch": epoch_ratios,
        "kl": float(np.mean(kls)),
    }


@dataclass
class TrainingLog:
    """One entry per finished episode."""

    rewards: list = field(default_factory=list)        # per-agent cumulative reward
    mean_rssi: list = field(default_factory=list)      # episode-mean user RSSI, dBm
    actor_loss: list = field(default_factory=list)
    critic_loss: list = field(default_factory=list)
    updates: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rewards)

    def episode_rewards(self) -> np.ndarray:
        """Mean over agents of each episode's cumulative reward."""
        return np.array([np.mean(r) for r in self.rewards])


def train(env, hyper: PPOHyper, seed: int, trainer: Trainer | None = None,
          algo: str = "beam_focusing_ma", progress=None) -> tuple[Trainer, TrainingLog]:
    """Alternate rollout collection and PPO updates until ``hyper.episodes`` episodes finish."""
    if trainer is None:
        trainer = Trainer(env.num_agents, env.obs_dim, env.act_dim, env.state_dim, hyper, seed,
                          env.config.delta_max, algo)
    trainer.check_compatible(env)
    tlog = TrainingLog()
    tracker = EpisodeTracker(np.zeros(trainer.n_agents))
    env.state = None
    last_stats = {"actor_loss": np.full(trainer.n_agents, np.nan), "critic_loss": np.nan}
    while trainer.episodes_done < hyper.episodes:
        before = len(tracker.finished)
        buf = collect(env, trainer, hyper.rollout_size, tracker, max_episodes=hyper.episodes)
        if len(buf) >= hyper.minibatch:
            prepare(buf, hyper)
            last_stats = ppo_update(trainer, buf, hyper)
            tlog.updates.append(last_stats)
        for rewards, rssi in tracker.finished[before:]:
            tlog.rewards.append(rewards)
            tlog.mean_rssi.append(rssi)
            tlog.actor_loss.append(np.asarray(last_stats["actor_loss"]).copy())
            tlog.critic_loss.append(float(last_stats["critic_loss"]))
        if progress is not None:
            progress(trainer.episodes_done, tlog)
        log.debug("episodes %d, last reward %.3f", trainer.episodes_done,
                  tlog.episode_rewards()[-1] if len(tlog) else float("nan"))
    return trainer, tlog


def evaluate(trainer: Trainer, env, steps: int = 300, seed: int = 0, users=None) -> np.ndarray:
    """Deterministic rollout; rows are per-user RSSI (dBm) followed by their mean."""
    trainer.check_compatible(env)
    env.reset(seed, users=users)
    obs = env.last_obs
    rows = np.empty((steps, env.config.num_users + 1))
    for t in range(steps):
        actions, _ = trainer.act(obs, deterministic=True)
        actions = np.clip(actions, -trainer.delta_max, trainer.delta_max)
        _, obs, _, _, info = env.step(actions)
        rows[t, :-1] = info["rssi"]
        rows[t, -1] = np.mean(info["rssi"])
    return rows
