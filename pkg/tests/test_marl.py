import numpy as np
import pytest
from dataclasses import replace

from reflectsim.config import load_config
from reflectsim.errors import ContractViolation, IncompatibleCheckpoint
from reflectsim.marl import (
    PPOHyper, RolloutBuffer, RunningNorm, Trainer, actor_loss_and_grads, collect, evaluate, gae,
    ppo_update, prepare, surrogate_terms, train,
)
from reflectsim.neural import DenseNet, GaussianHead, log_prob_of
from reflectsim.runner import make_env


@pytest.fixture(scope="module")
def cfg():
    return load_config()


def small_trainer(env, seed=0, **hyper):
    return Trainer(env.num_agents, env.obs_dim, env.act_dim, env.state_dim,
                   replace(PPOHyper(), **hyper), seed, env.config.delta_max, hidden=(16, 16))


# -- gae -----------------------------------------------------------------

def test_gae_single_step():
    adv, ret = gae([1.0], [0.0], [1.0], 0.0, 0.985, 0.9)
    assert adv[0] == 1.0 and ret[0] == 1.0


def test_gae_two_step_hand_case():
    adv, ret = gae([1.0, 1.0], [0.0, 0.0], [0.0, 1.0], 0.0, 0.5, 0.5)
    np.testing.assert_array_equal(adv, [1.25, 1.0])
    np.testing.assert_array_equal(ret, [1.25, 1.0])


def test_gae_lambda_zero_is_td_residual():
    rng = np.random.default_rng(0)
    r, v = rng.normal(size=50), rng.normal(size=50)
    d = (rng.uniform(size=50) < 0.1).astype(float)
    boot = 0.7
    adv, _ = gae(r, v, d, boot, 0.9, 0.0)
    nxt = np.append(v[1:], boot)
    np.testing.assert_array_equal(adv, r + 0.9 * nxt * (1 - d) - v)


def test_gae_suffix_sums():
    r = np.array([0.5, -1.0, 2.0, 3.0])
    adv, _ = gae(r, np.zeros(4), np.zeros(4), 0.0, 1.0 - 1e-15, 1.0)
    np.testing.assert_allclose(adv, np.cumsum(r[::-1])[::-1], atol=1e-12)


def test_gae_done_blocks_bootstrap():
    adv, _ = gae([0.0, 0.0], [0.0, 0.0], [1.0, 0.0], 10.0, 0.9, 0.9)
    assert adv[0] == 0.0 and adv[1] == pytest.approx(9.0)


def test_gae_per_agent_columns():
    rng = np.random.default_rng(1)
    r = rng.normal(size=(20, 3))
    v = rng.normal(size=(20, 1))
    d = np.zeros((20, 1))
    adv, _ = gae(r, v, d, 0.3, 0.95, 0.9)
    for l in range(3):
        np.testing.assert_allclose(adv[:, l], gae(r[:, l], v[:, 0], d[:, 0], 0.3, 0.95, 0.9)[0])


# -- surrogate -----------------------------------------------------------

def test_surrogate_clip_cases():
    ratio = np.array([1.0, 1.5, 0.5, 1.5, 0.5, 1.1])
    adv = np.array([1.0, 1.0, -1.0, -1.0, 1.0, 1.0])
    obj, d = surrogate_terms(ratio, adv, 0.2)
    np.testing.assert_allclose(obj, [1.0, 1.2, -0.8, -1.5, 0.5, 1.1])
    # clip active (A>0, rho>1+eps and A<0, rho<1-eps) -> zero gradient
    np.testing.assert_array_equal(d, [1.0, 0.0, 0.0, -1.5, 0.5, 1.1])


def test_clip_active_sample_gives_zero_parameter_gradient():
    rng = np.random.default_rng(2)
    net = DenseNet([4, 8, 3], rng)
    head = GaussianHead(np.full(3, -1.0))
    obs = rng.normal(size=(1, 4))
    action = net(obs) + 0.3
    new_logp = log_prob_of(head, net(obs), action)
    old_logp = new_logp - np.log(1.5)                 # ratio 1.5
    hyper = replace(PPOHyper(), entropy_coef=0.0)
    _, grads, ratio, _ = actor_loss_and_grads(net, head, obs, action, old_logp, np.array([1.0]), hyper)
    assert ratio[0] == pytest.approx(1.5)
    assert all(np.all(g == 0.0) for g in grads)


def test_ratio_one_first_pass(cfg):
    env = make_env(cfg)
    trainer = small_trainer(env)
    buf = prepare(collect(env, trainer, 200), trainer.hyper)
    for l in range(3):
        loss, _, ratio, kl = actor_loss_and_grads(
            trainer.actors[l], trainer.heads[l], buf.obs[:, l], buf.actions[:, l],
            buf.log_probs[:, l], buf.advantages[:, l], replace(trainer.hyper, entropy_coef=0.0))
        np.testing.assert_array_equal(ratio, 1.0)
        assert abs(loss) < 1e-12 and kl == 0.0


# -- collection ----------------------------------------------------------

def test_collect_shapes_and_consistency(cfg):
    env = make_env(cfg)
    trainer = small_trainer(env)
    buf = collect(env, trainer, 1000)
    assert len(buf) == 1000
    assert buf.obs.shape == (1000, 3, 9) and buf.actions.shape == (1000, 3, 3)
    assert buf.states.shape == (1000, 27) and buf.rewards.shape == (1000, 3)
    assert buf.dones.sum() == 10 and np.all(buf.dones[99::100] == 1)
    for l in range(3):
        means = trainer.actors[l](buf.obs[:, l])
        np.testing.assert_array_equal(buf.log_probs[:, l],
                                      log_prob_of(trainer.heads[l], means, buf.actions[:, l]))
    assert trainer.episodes_done == 10


def test_collect_deterministic(cfg):
    bufs = []
    for _ in range(2):
        env = make_env(cfg)
        bufs.append(collect(env, small_trainer(env, seed=4), 150))
    for name in ("obs", "actions", "log_probs", "rewards", "values", "states"):
        np.testing.assert_array_equal(getattr(bufs[0], name), getattr(bufs[1], name))


def test_advantage_normalization(cfg):
    env = make_env(cfg)
    trainer = small_trainer(env)
    buf = prepare(collect(env, trainer, 300), trainer.hyper)
    assert np.all(np.abs(buf.advantages.mean(axis=0)) < 1e-10)
    np.testing.assert_allclose(buf.advantages.std(axis=0), 1.0, atol=1e-6)


# -- update --------------------------------------------------------------

def test_unprepared_buffer_rejected(cfg):
    env = make_env(cfg)
    trainer = small_trainer(env)
    with pytest.raises(ContractViolation):
        ppo_update(trainer, collect(env, trainer, 200))


def test_update_statistics_and_clip_band(cfg):
    env = make_env(cfg)
    trainer = small_trainer(env, epochs_per_update=4)
    buf = prepare(collect(env, trainer, 1000), trainer.hyper)
    stats = ppo_update(trainer, buf)
    assert stats["actor_loss"].shape == (3,)
    assert len(stats["critic_loss_by_epoch"]) == 4
    eps = trainer.hyper.clip_eps
    assert all(1 - 2 * eps <= r <= 1 + 2 * eps for r in stats["mean_ratio_by_epoch"])


def test_critic_loss_descends_on_frozen_buffer(cfg):
    env = make_env(cfg)
    trainer = small_trainer(env, seed=1)
    drops = []
    for _ in range(5):
        buf = prepare(collect(env, trainer, 1000), trainer.hyper)
        losses = ppo_update(trainer, buf)["critic_loss_by_epoch"]
        drops += [b <= a for a, b in zip(losses[:-1], losses[1:])]
    assert np.mean(drops) >= 0.9


def test_one_sample_convergence():
    trainer = Trainer(1, 4, 3, 5, replace(PPOHyper(), lr=1e-3, minibatch=8, rollout_size=8,
                                          entropy_coef=0.0), seed=0, hidden=(16,))
    obs = np.tile([0.1, -0.2, 0.3, 0.0], (8, 1))[:, None, :]
    target = np.array([0.4, -0.3, 0.2])
    start = np.linalg.norm(trainer.actors[0](obs[0, 0]) - target)
    for _ in range(30):
        mean = trainer.actors[0](obs[0, 0])
        logp = log_prob_of(trainer.heads[0], mean, target)
        buf = RolloutBuffer(obs, np.tile(target, (8, 1, 1)), np.full((8, 1), logp), np.ones((8, 1)),
                            np.zeros(8), np.zeros(8), np.zeros((8, 5)))
        buf.advantages = np.ones((8, 1))
        buf.returns = np.ones((8, 1))
        ppo_update(trainer, buf)
    end = np.linalg.norm(trainer.actors[0](obs[0, 0]) - target)
    assert end < 0.1 * start


def test_running_norm_matches_batch_statistics():
    rng = np.random.default_rng(3)
    chunks = [rng.normal(3, 2, size=n) for n in (10, 50, 7)]
    rn = RunningNorm()
    for c in chunks:
        rn.update(c)
    allx = np.concatenate(chunks)
    assert rn.mean == pytest.approx(allx.mean(), abs=1e-12)
    assert rn.var == pytest.approx(allx.var(), abs=1e-12)


# -- train / evaluate ----------------------------------------------------

def test_zero_episodes_leaves_initialisation(cfg):
    env = make_env(cfg)
    fresh = small_trainer(env)
    trainer, tlog = train(env, replace(fresh.hyper, episodes=0), 0, trainer=small_trainer(env))
    assert len(tlog) == 0
    for a, b in zip(fresh.actors[0].params, trainer.actors[0].params):
        np.testing.assert_array_equal(a, b)


def test_train_log_rows_and_determinism(cfg):
    runs = []
    for _ in range(2):
        env = make_env(cfg, episode_length=20)
        trainer = small_trainer(env, seed=3, rollout_size=100, minibatch=50, epochs_per_update=2)
        runs.append(train(env, replace(trainer.hyper, episodes=12), 3, trainer=trainer))
    (t1, log1), (t2, log2) = runs
    assert len(log1) == 12
    np.testing.assert_array_equal(np.array(log1.rewards), np.array(log2.rewards))
    for a, b in zip(t1.critic.params, t2.critic.params):
        np.testing.assert_array_equal(a, b)
    env = make_env(cfg)
    rows = evaluate(t1, env, steps=30, seed=5)
    assert rows.shape == (30, 4)
    np.testing.assert_array_equal(rows, evaluate(t1, make_env(cfg), steps=30, seed=5))
    np.testing.assert_allclose(rows[:, -1], rows[:, :3].mean(axis=1))


def test_evaluate_rejects_mismatched_trainer(cfg):
    env = make_env(cfg)
    wrong = Trainer(2, 9, 3, 21, PPOHyper(), hidden=(8,))
    with pytest.raises(IncompatibleCheckpoint):
        evaluate(wrong, env, steps=5)


def test_actors_see_only_their_own_observation(cfg):
    env = make_env(cfg)
    trainer = small_trainer(env)
    env.reset(0)
    obs = env.last_obs.copy()
    base, _ = trainer.act(obs, deterministic=True)
    tampered = obs.copy()
    tampered[1:] += 0.3
    out, _ = trainer.act(tampered, deterministic=True)
    np.testing.assert_array_equal(out[0], base[0])
    assert not np.array_equal(out[1], base[1])
