import numpy as np
import pytest

from gradcheck import max_rel_error_over, numeric_param_grads
from gridrl.ddpg import AgentConfig, DdpgAgent, ReplayBuffer, Transition
from gridrl.errors import DataError


def tiny_config(**kwargs):
    base = dict(
        obs_dim=2, act_dim=1, act_low=(-1.0,), act_high=(1.0,),
        hidden_sizes=(16, 16),
        actor_activations=("leaky-relu", "leaky-relu", "tanh"),
        critic_activations=("relu", "relu", "linear"),
        actor_optimizer="adam", actor_lr=2e-3,
        critic_optimizer="adam", critic_lr=2e-3,
        batch_size=32, buffer_capacity=5000, warmup_factor=2,
        gamma=0.9, tau=0.01, batch_norm=False,
    )
    base.update(kwargs)
    return AgentConfig(**base)


def zero_actor(agent):
    for name in agent.actor.params.trainable_names():
        agent.actor.params[name] = np.zeros_like(agent.actor.params[name])


def test_buffer_fifo_eviction():
    buf = ReplayBuffer(3, obs_dim=1, act_dim=1)
    for i in range(4):
        buf.push(Transition(np.array([float(i)]), np.array([0.0]), 0.0, np.array([0.0])))
    assert len(buf) == 3
    batch = buf.sample(3, np.random.default_rng(0))
    seen = sorted(batch["obs"][:, 0].tolist())
    assert seen == [1.0, 2.0, 3.0]  # the oldest entry is gone


def test_buffer_sample_full_is_permutation():
    buf = ReplayBuffer(10, 1, 1)
    for i in range(5):
        buf.push(Transition(np.array([float(i)]), np.array([0.0]), float(i), np.array([0.0])))
    batch = buf.sample(5, np.random.default_rng(1))
    assert sorted(batch["reward"].tolist()) == [0.0, 1.0, 2.0, 3.0, 4.0]


def test_buffer_seeded_sampling_deterministic():
    buf = ReplayBuffer(100, 1, 1)
    for i in range(50):
        buf.push(Transition(np.array([float(i)]), np.array([0.0]), 0.0, np.array([0.0])))
    a = buf.sample(8, np.random.default_rng(7))
    b = buf.sample(8, np.random.default_rng(7))
    assert np.array_equal(a["obs"], b["obs"])


def test_buffer_underfilled_sampling_rejected():
    buf = ReplayBuffer(10, 1, 1)
    buf.push(Transition(np.array([0.0]), np.array([0.0]), 0.0, np.array([0.0])))
    with pytest.raises(DataError):
        buf.sample(2, np.random.default_rng(0))


def test_zero_weight_tanh_actor_hits_midpoint():
    agent = DdpgAgent(tiny_config(act_low=(-2.0,), act_high=(2.0,)),
                      np.random.default_rng(0))
    zero_actor(agent)
    action = agent.select_action(np.zeros(2), noise_std=0.0)
    assert action[0] == pytest.approx(0.0)


def test_zero_weight_sigmoid_actor_hits_midpoint():
    cfg = tiny_config(act_low=(0.05,), act_high=(0.20,),
                      actor_activations=("leaky-relu", "leaky-relu", "sigmoid"))
    agent = DdpgAgent(cfg, np.random.default_rng(0))
    zero_actor(agent)
    action = agent.select_action(np.zeros(2), noise_std=0.0)
    assert action[0] == pytest.approx(0.125)


def test_saturated_actor_clips_to_bounds():
    agent = DdpgAgent(tiny_config(), np.random.default_rng(0))
    zero_actor(agent)
    agent.actor.params["layer2.b"] = np.array([50.0])  # tanh saturates to 1
    action = agent.select_action(np.zeros(2), noise_std=0.0)
    assert action[0] == pytest.approx(1.0)


def test_action_always_within_bounds_under_noise():
    agent = DdpgAgent(tiny_config(act_low=(-0.3,), act_high=(0.6,)),
                      np.random.default_rng(3))
    for _ in range(200):
        a = agent.select_action(np.random.default_rng(5).normal(size=2), noise_std=2.0)
        assert -0.3 <= a[0] <= 0.6


def test_noise_decay_schedule():
    cfg = tiny_config(noise_std=0.3, noise_floor=0.05, noise_decay_fraction=0.8)
    agent = DdpgAgent(cfg, np.random.default_rng(0))
    agent.set_noise_for_episode(0, 100)
    assert agent.noise_std == pytest.approx(0.3)
    agent.set_noise_for_episode(40, 100)
    assert agent.noise_std == pytest.approx(0.3 + 0.5 * (0.05 - 0.3))
    agent.set_noise_for_episode(80, 100)
    assert agent.noise_std == pytest.approx(0.05)
    agent.set_noise_for_episode(99, 100)
    assert agent.noise_std == pytest.approx(0.05)


def test_bellman_target_arithmetic():
    agent = DdpgAgent(tiny_config(gamma=0.95), np.random.default_rng(2))
    # freeze targets to produce Q' = 2 exactly: zero weights, bias 2 on the head
    for name in agent.target_critic.params.trainable_names():
        agent.target_critic.params[name] = np.zeros_like(agent.target_critic.params[name])
    agent.target_critic.params["layer2.b"] = np.array([2.0])
    batch = {
        "obs": np.zeros((1, 2)), "action": np.zeros((1, 1)),
        "reward": np.array([1.0]), "next_obs": np.zeros((1, 2)),
        "terminal": np.array([0.0]),
    }
    # y = 1 + 0.95*2 = 2.9; make online critic output 2.9 -> loss 0
    for name in agent.critic.params.trainable_names():
        agent.critic.params[name] = np.zeros_like(agent.critic.params[name])
    agent.critic.params["layer2.b"] = np.array([2.9])
    loss = agent.critic_update(batch)
    assert loss == pytest.approx(0.0, abs=1e-24)


def test_terminal_cuts_bootstrap():
    agent = DdpgAgent(tiny_config(gamma=0.95), np.random.default_rng(2))
    for name in agent.target_critic.params.trainable_names():
        agent.target_critic.params[name] = np.zeros_like(agent.target_critic.params[name])
    agent.target_critic.params["layer2.b"] = np.array([123.0])
    for name in agent.critic.params.trainable_names():
        agent.critic.params[name] = np.zeros_like(agent.critic.params[name])
    agent.critic.params["layer2.b"] = np.array([1.0])
    batch = {
        "obs": np.zeros((1, 2)), "action": np.zeros((1, 1)),
        "reward": np.array([1.0]), "next_obs": np.zeros((1, 2)),
        "terminal": np.array([1.0]),
    }
    loss = agent.critic_update(batch)  # y = r = 1 = Q -> 0
    assert loss == pytest.approx(0.0, abs=1e-24)


def test_exact_fit_critic_keeps_parameters_under_plain_sgd():
    cfg = tiny_config(critic_optimizer="sgd_momentum", critic_lr=0.1)
    agent = DdpgAgent(cfg, np.random.default_rng(4))
    for name in agent.critic.params.trainable_names():
        agent.critic.params[name] = np.zeros_like(agent.critic.params[name])
    agent.critic.params["layer2.b"] = np.array([0.5])
    for name in agent.target_critic.params.trainable_names():
        agent.target_critic.params[name] = np.zeros_like(agent.target_critic.params[name])
    agent.target_critic.params["layer2.b"] = np.array([0.5])
    batch = {
        "obs": np.zeros((4, 2)), "action": np.zeros((4, 1)),
        "reward": np.full(4, 0.5 * (1 - cfg.gamma)), "next_obs": np.zeros((4, 2)),
        "terminal": np.zeros(4),
    }
    before = {n: agent.critic.params[n].copy() for n in agent.critic.params.names()}
    loss = agent.critic_update(batch)
    assert loss == pytest.approx(0.0, abs=1e-20)
    for n, v in before.items():
        assert np.allclose(agent.critic.params[n], v, atol=1e-18)


def test_zero_critic_freezes_actor():
    agent = DdpgAgent(tiny_config(), np.random.default_rng(5))
    for name in agent.critic.params.trainable_names():
        agent.critic.params[name] = np.zeros_like(agent.critic.params[name])
    batch = {"obs": np.random.default_rng(6).normal(size=(8, 2))}
    before = {n: agent.actor.params[n].copy() for n in agent.actor.params.names()}
    agent.actor_update(batch)
    for n, v in before.items():
        assert np.array_equal(agent.actor.params[n], v)


def test_actor_gradient_matches_finite_differences():
    # composed actor-through-critic objective, batch-norm active in both nets
    cfg = tiny_config(batch_norm=True)
    agent = DdpgAgent(cfg, np.random.default_rng(8))
    rng = np.random.default_rng(9)
    obs = rng.normal(size=(6, 2))

    def objective():
        raw = agent.actor.forward(obs, mode="train", update_stats=False)
        action = agent._map_action(raw)
        x = np.concatenate([obs, agent._normalize_action(action)], axis=1)
        q = agent.critic.forward(x, mode="train", update_stats=False)
        return float(np.mean(q))

    raw = agent.actor.forward(obs, mode="train", update_stats=False)
    action = agent._map_action(raw)
    x = np.concatenate([obs, agent._normalize_action(action)], axis=1)
    q = agent.critic.forward(x, mode="train", update_stats=False)
    _, dx = agent.critic.backward(np.full_like(q, 1.0 / q.shape[0]))
    d_action = dx[:, cfg.obs_dim:] * (2.0 / (np.array(cfg.act_high) - np.array(cfg.act_low)))
    d_raw = d_action * agent._map_jacobian()
    grads, _ = agent.actor.backward(d_raw)
    numeric = numeric_param_grads(objective, agent.actor.params)
    assert max_rel_error_over(grads, numeric) < 1e-3


def test_soft_targets_contract_toward_online():
    agent = DdpgAgent(tiny_config(tau=0.5), np.random.default_rng(10))
    name = "layer0.W"
    gap_before = np.abs(agent.target_critic.params[name] - agent.critic.params[name]).max()
    assert gap_before == 0.0  # targets start as hard copies
    agent.critic.params[name] = agent.critic.params[name] + 1.0
    agent.soft_update_targets()
    gap = np.abs(agent.target_critic.params[name] - agent.critic.params[name]).max()
    assert gap == pytest.approx(0.5)


def quadratic_bowl_run(seed: int, target: float = 0.7, steps: int = 2000) -> float:
    """Stateless environment with reward -(a - target)^2 and fixed observation."""
    cfg = tiny_config(
        noise_std=0.3, noise_floor=0.02, noise_decay_fraction=0.8,
        hidden_sizes=(32, 32), actor_activations=("leaky-relu", "leaky-relu", "tanh"),
        actor_lr=2e-3, critic_lr=1e-2, batch_size=128, tau=0.1, warmup_factor=1,
    )
    agent = DdpgAgent(cfg, np.random.default_rng(seed))
    obs = np.array([1.0, 0.0])
    episode_len = 50
    total_episodes = steps // episode_len
    for step in range(steps):
        agent.set_noise_for_episode(step // episode_len, total_episodes)
        action = agent.select_action(obs)
        reward = -float((action[0] - target) ** 2)
        agent.buffer.push(Transition(obs, action, reward, obs, terminal=False))
        agent.update()
    return float(agent.select_action(obs, noise_std=0.0)[0])


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_quadratic_bowl_convergence(seed):
    final = quadratic_bowl_run(seed)
    assert abs(final - 0.7) < 0.05
