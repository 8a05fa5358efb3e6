"""Deterministic-policy actor-critic agent with target networks.

The critic regresses on bootstrapped targets y = r + gamma * Q'(s', mu'(s'))
(y = r at terminals) by one descent step on the mean-squared error; the actor
ascends mean Q(s, mu(s)) through the critic's action input. Both target
networks blend toward the online ones with a small constant after every
update. Actions are produced by squashing the actor head (tanh or sigmoid)
onto the configured bounds; exploration adds clipped Gaussian noise in
action units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gridrl.errors import DataError, NumericError, ShapeError
from gridrl.nn import (
    Mlp,
    MlpSpec,
    make_optimizer,
    optimizer_from_document,
    optimizer_step,
    optimizer_to_document,
    soft_update,
)
from gridrl.nn.activations import ACTIVATION_RANGE


@dataclass(frozen=True)
class AgentConfig:
    obs_dim: int
    act_dim: int
    act_low: tuple[float, ...]
    act_high: tuple[float, ...]
    gamma: float = 0.95
    tau: float = 0.005
    batch_size: int = 64
    hidden_sizes: tuple[int, ...] = (32, 32, 16)
    actor_activations: tuple[str, ...] = ("leaky-relu", "leaky-relu", "leaky-relu", "tanh")
    critic_activations: tuple[str, ...] = ("relu", "relu", "relu", "linear")
    actor_optimizer: str = "sgd_momentum"
    actor_lr: float = 5e-4
    actor_momentum: float = 0.8
    critic_optimizer: str = "adamw"
    critic_lr: float = 5e-3
    critic_weight_decay: float = 0.01
    noise_std: float = 0.1
    noise_floor: float = 0.05
    noise_decay_fraction: float = 0.8
    buffer_capacity: int = 100_000
    warmup_factor: int = 10
    grad_clip: float = 10.0
    batch_norm: bool = True

    def __post_init__(self):
        if len(self.act_low) != self.act_dim or len(self.act_high) != self.act_dim:
            raise ShapeError("action bounds must match act_dim")
        if any(lo >= hi for lo, hi in zip(self.act_low, self.act_high)):
            raise ValueError("need act_low < act_high per dimension")
        if not (0.0 < self.tau <= 1.0):
            raise ValueError("tau must be in (0, 1]")
        if self.actor_activations[-1] not in ("tanh", "sigmoid"):
            raise ValueError("actor head must be tanh or sigmoid to bound the action")

    @property
    def warmup(self) -> int:
        return self.warmup_factor * self.batch_size


@dataclass
class Transition:
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    terminal: bool = False


class ReplayBuffer:
    """FIFO ring over preallocated arrays, grown in chunks up to capacity."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self._allocated = 0
        self._len = 0
        self._head = 0
        self._obs = self._act = self._rew = self._next = self._term = None

    def _grow(self, needed: int) -> None:
        new_size = min(self.capacity, max(1024, needed, self._allocated * 2))
        if new_size <= self._allocated:
            return
        def grown(old, width):
            arr = np.zeros((new_size, width)) if width else np.zeros(new_size)
            if old is not None and self._len:
                arr[: self._len] = old[: self._len]
            return arr
        self._obs = grown(self._obs, self.obs_dim)
        self._act = grown(self._act, self.act_dim)
        self._rew = grown(self._rew, 0)
        self._next = grown(self._next, self.obs_dim)
        self._term = grown(self._term, 0)
        self._allocated = new_size

    def __len__(self) -> int:
        return self._len

    def push(self, t: Transition) -> None:
        if self._len < self.capacity and self._head >= self._allocated:
            self._grow(self._head + 1)
        idx = self._head
        self._obs[idx] = t.obs
        self._act[idx] = t.action
        self._rew[idx] = t.reward
        self._next[idx] = t.next_obs
        self._term[idx] = 1.0 if t.terminal else 0.0
        self._head = (self._head + 1) % self.capacity
        self._len = min(self._len + 1, self.capacity)

    def sample(self, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        """Uniform minibatch without replacement within the batch."""
        if n > self._len:
            raise DataError(f"buffer holds {self._len} transitions, cannot sample {n}")
        idx = rng.choice(self._len, size=n, replace=False)
        return {
            "obs": self._obs[idx].copy(),
            "action": self._act[idx].copy(),
            "reward": self._rew[idx].copy(),
            "next_obs": self._next[idx].copy(),
            "terminal": self._term[idx].copy(),
        }


def _squash_bounds(head: str) -> tuple[float, float]:
    rng = ACTIVATION_RANGE[head]
    if rng is None:
        raise ValueError(f"actor head {head!r} does not bound its output")
    return rng


class DdpgAgent:
    """One training context: actor, critic, their targets, optimizers, noise."""

    def __init__(self, config: AgentConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        bn = frozenset({0}) if config.batch_norm else frozenset()
        actor_spec = MlpSpec(config.obs_dim, config.hidden_sizes + (config.act_dim,),
                             config.actor_activations, batch_norm_layers=bn)
        critic_spec = MlpSpec(config.obs_dim + config.act_dim, config.hidden_sizes + (1,),
                              config.critic_activations, batch_norm_layers=bn)
        self.actor = Mlp(actor_spec, rng=rng)
        self.critic = Mlp(critic_spec, rng=rng)
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.actor_opt = make_optimizer(
            config.actor_optimizer, self.actor.params, config.actor_lr,
            momentum=config.actor_momentum)
        self.critic_opt = make_optimizer(
            config.critic_optimizer, self.critic.params, config.critic_lr,
            weight_decay=config.critic_weight_decay)
        self.buffer = ReplayBuffer(config.buffer_capacity, config.obs_dim, config.act_dim)
        self.noise_std = config.noise_std
        self._act_low = np.array(config.act_low, dtype=np.float64)
        self._act_high = np.array(config.act_high, dtype=np.float64)
        self._head = config.actor_activations[-1]

    # -- action mapping ----------------------------------------------------

    def _map_action(self, raw: np.ndarray) -> np.ndarray:
        lo, hi = _squash_bounds(self._head)
        frac = (raw - lo) / (hi - lo)
        return self._act_low + frac * (self._act_high - self._act_low)

    def _map_jacobian(self) -> np.ndarray:
        lo, hi = _squash_bounds(self._head)
        return (self._act_high - self._act_low) / (hi - lo)

    def _normalize_action(self, action: np.ndarray) -> np.ndarray:
        return 2.0 * (action - self._act_low) / (self._act_high - self._act_low) - 1.0

    def select_action(self, obs: np.ndarray, noise_std: float | None = None,
                      rng: np.random.Generator | None = None) -> np.ndarray:
        """Squashed actor output mapped to bounds, plus clipped Gaussian noise."""
        raw = self.actor.forward(np.asarray(obs, dtype=np.float64), mode="eval")
        action = self._map_action(raw)
        std = self.noise_std if noise_std is None else noise_std
        if std > 0:
            action = action + (rng or self.rng).normal(0.0, std, size=action.shape)
        return np.clip(action, self._act_low, self._act_high)

    def set_noise_for_episode(self, episode: int, total_episodes: int) -> None:
        """Linear decay from the initial std to the floor over the first
        noise_decay_fraction of episodes, then hold."""
        cfg = self.config
        floor = min(cfg.noise_floor, cfg.noise_std)
        span = max(1, int(round(cfg.noise_decay_fraction * total_episodes)))
        frac = min(1.0, episode / span)
        self.noise_std = cfg.noise_std + frac * (floor - cfg.noise_std)

    # -- updates -----------------------------------------------------------

    def critic_update(self, batch: dict[str, np.ndarray]) -> float:
        """One descent step on the bootstrapped mean-squared error."""
        cfg = self.config
        next_raw = self.target_actor.forward(batch["next_obs"], mode="eval")
        next_action = self._map_action(next_raw)
        q_next = self.target_critic.forward(
            np.concatenate([batch["next_obs"], self._normalize_action(next_action)], axis=1),
            mode="eval")[:, 0]
        y = batch["reward"] + cfg.gamma * (1.0 - batch["terminal"]) * q_next
        q = self.critic.forward(
            np.concatenate([batch["obs"], self._normalize_action(batch["action"])], axis=1),
            mode="train")[:, 0]
        err = q - y
        loss = float(np.mean(err**2))
        if not np.isfinite(loss):
            raise NumericError(f"critic loss is not finite ({loss})")
        grads, _ = self.critic.backward((2.0 * err / err.size)[:, None])
        grads = grads.clip_global_norm(cfg.grad_clip)
        optimizer_step(self.critic_opt, self.critic.params, grads, "descent")
        return loss

    def actor_update(self, batch: dict[str, np.ndarray]) -> float:
        """One ascent step on mean Q(s, mu(s)); critic parameters untouched."""
        cfg = self.config
        raw = self.actor.forward(batch["obs"], mode="train")
        action = self._map_action(raw)
        x = np.concatenate([batch["obs"], self._normalize_action(action)], axis=1)
        q = self.critic.forward(x, mode="train", update_stats=False)
        objective = float(np.mean(q))
        if not np.isfinite(objective):
            raise NumericError("actor objective is not finite")
        _, dx = self.critic.backward(np.full_like(q, 1.0 / q.shape[0]))
        d_norm_action = dx[:, cfg.obs_dim:]
        d_action = d_norm_action * (2.0 / (self._act_high - self._act_low))
        d_raw = d_action * self._map_jacobian()
        a_grads, _ = self.actor.backward(d_raw)
        a_grads = a_grads.clip_global_norm(cfg.grad_clip)
        optimizer_step(self.actor_opt, self.actor.params, a_grads, "ascent")
        return objective

    def soft_update_targets(self) -> None:
        soft_update(self.target_critic.params, self.critic.params, self.config.tau)
        soft_update(self.target_actor.params, self.actor.params, self.config.tau)

    def update(self) -> dict[str, float] | None:
        """Sample a minibatch and run one critic + actor + target update."""
        if len(self.buffer) < max(self.config.warmup, self.config.batch_size):
            return None
        batch = self.buffer.sample(self.config.batch_size, self.rng)
        critic_loss = self.critic_update(batch)
        actor_objective = self.actor_update(batch)
        self.soft_update_targets()
        return {"critic_loss": critic_loss, "actor_objective": actor_objective}

    # -- persistence ---------------------------------------------------------

    def state_documents(self):
        stores = {
            "actor": self.actor.params,
            "critic": self.critic.params,
            "target_actor": self.target_actor.params,
            "target_critic": self.target_critic.params,
        }
        extra = {
            "actor_opt": optimizer_to_document(self.actor_opt),
            "critic_opt": optimizer_to_document(self.critic_opt),
            "noise_std": self.noise_std,
            "rng_state": self.rng.bit_generator.state,
        }
        return stores, extra

    def restore(self, stores, extra) -> None:
        for role, net in (("actor", self.actor), ("critic", self.critic),
                          ("target_actor", self.target_actor),
                          ("target_critic", self.target_critic)):
            src = stores[role]
            for name in net.params.names():
                net.params[name] = src[name]
        self.actor_opt = optimizer_from_document(extra["actor_opt"])
        self.critic_opt = optimizer_from_document(extra["critic_opt"])
        self.noise_std = float(extra["noise_std"])
        self.rng.bit_generator.state = extra["rng_state"]
