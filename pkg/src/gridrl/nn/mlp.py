"""Dense feed-forward network with analytic gradients and optional batch norm.

Everything is float64 and numpy-only. A forward call caches the
intermediates needed by `backward`; `backward` returns both parameter
gradients and the gradient with respect to the input (the latter feeds the
actor-through-critic chain rule in the policy update).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gridrl.errors import NumericError, ShapeError, StateError
from gridrl.nn.activations import ACTIVATIONS, activation_grad, apply_activation
from gridrl.nn.store import GradStore, ParamStore

BN_EPSILON = 1e-5
BN_MOMENTUM = 0.1


@dataclass(frozen=True)
class MlpSpec:
    """Network layout: layer output widths and one activation tag per layer."""

    in_dim: int
    layer_sizes: tuple[int, ...]
    activations: tuple[str, ...]
    batch_norm_layers: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.in_dim <= 0 or any(s <= 0 for s in self.layer_sizes):
            raise ShapeError("layer sizes must be positive")
        if len(self.activations) != len(self.layer_sizes):
            raise ShapeError(
                f"{len(self.activations)} activations for {len(self.layer_sizes)} layers"
            )
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        if any(i < 0 or i >= len(self.layer_sizes) for i in self.batch_norm_layers):
            raise ShapeError("batch_norm_layers index out of range")

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes)

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = []
        prev = self.in_dim
        for size in self.layer_sizes:
            dims.append((prev, size))
            prev = size
        return dims


@dataclass
class BatchNormState:
    """Standalone batch-normalization state for one feature vector."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    epsilon: float = BN_EPSILON
    mode: str = "train"

    @classmethod
    def create(cls, width: int, momentum: float = BN_MOMENTUM, epsilon: float = BN_EPSILON) -> "BatchNormState":
        return cls(
            gamma=np.ones(width),
            beta=np.zeros(width),
            running_mean=np.zeros(width),
            running_var=np.ones(width),
            momentum=momentum,
            epsilon=epsilon,
        )


def _bn_forward(x, gamma, beta, running_mean, running_var, mode, momentum, epsilon,
                update_stats=True):
    """Returns (y, cache, new_running_mean, new_running_var)."""
    if mode == "train":
        if x.shape[0] < 2:
            raise ShapeError("batch normalization needs batch size >= 2 in train mode")
        mean = x.mean(axis=0)
        var = x.var(axis=0)  # population variance
        if update_stats:
            running_mean = (1.0 - momentum) * running_mean + momentum * mean
            running_var = (1.0 - momentum) * running_var + momentum * var
    elif mode == "eval":
        mean = running_mean
        var = running_var
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    inv_std = 1.0 / np.sqrt(var + epsilon)
    xhat = (x - mean) * inv_std
    y = gamma * xhat + beta
    cache = (xhat, inv_std, gamma, mode, x.shape[0])
    return y, cache, running_mean, running_var


def _bn_backward(dy, cache):
    """Gradients through batch norm: returns (dx, dgamma, dbeta)."""
    xhat, inv_std, gamma, mode, batch = cache
    dgamma = np.sum(dy * xhat, axis=0)
    dbeta = np.sum(dy, axis=0)
    dxhat = dy * gamma
    if mode == "eval":
        return dxhat * inv_std, dgamma, dbeta
    # train mode: mean and variance depend on x
    dx = (inv_std / batch) * (
        batch * dxhat - np.sum(dxhat, axis=0) - xhat * np.sum(dxhat * xhat, axis=0)
    )
    return dx, dgamma, dbeta


def batchnorm_apply(state: BatchNormState, x: np.ndarray, update_stats: bool = True) -> np.ndarray:
    """Normalize a [batch, features] array per the state's mode.

    Train mode standardizes with batch statistics and folds them into the
    running averages; eval mode uses the running statistics only.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected [batch, features], got shape {x.shape}")
    y, _, new_mean, new_var = _bn_forward(
        x, state.gamma, state.beta, state.running_mean, state.running_var,
        state.mode, state.momentum, state.epsilon, update_stats=update_stats,
    )
    state.running_mean = new_mean
    state.running_var = new_var
    return y


def init_mlp_params(spec: MlpSpec, rng: np.random.Generator) -> ParamStore:
    """Uniform +-1/sqrt(fan_in) weights and biases, seeded by the caller."""
    params = ParamStore()
    for i, (fan_in, fan_out) in enumerate(spec.layer_dims()):
        limit = 1.0 / np.sqrt(fan_in)
        params.add(f"layer{i}.W", rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        params.add(f"layer{i}.b", rng.uniform(-limit, limit, size=fan_out))
        if i in spec.batch_norm_layers:
            params.add(f"layer{i}.bn.gamma", np.ones(fan_out))
            params.add(f"layer{i}.bn.beta", np.zeros(fan_out))
            params.add(f"layer{i}.bn.running_mean", np.zeros(fan_out), trainable=False)
            params.add(f"layer{i}.bn.running_var", np.ones(fan_out), trainable=False)
    return params


class Mlp:
    """Feed-forward net over a ParamStore; layer i computes act(BN(x W + b))."""

    def __init__(self, spec: MlpSpec, params: ParamStore | None = None,
                 rng: np.random.Generator | None = None):
        self.spec = spec
        if params is None:
            params = init_mlp_params(spec, rng or np.random.default_rng(0))
        self.params = params
        self._cache = None

    def forward(self, x: np.ndarray, mode: str = "train", update_stats: bool = True) -> np.ndarray:
        """Apply the network; caches intermediates for a later backward()."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.spec.in_dim:
            raise ShapeError(
                f"input width {x.shape[-1] if x.ndim else '?'} != spec in_dim {self.spec.in_dim}"
            )
        layers = []
        a = x
        for i in range(self.spec.n_layers):
            w = self.params[f"layer{i}.W"]
            b = self.params[f"layer{i}.b"]
            z = a @ w + b
            bn_cache = None
            if i in self.spec.batch_norm_layers:
                z, bn_cache, new_mean, new_var = _bn_forward(
                    z,
                    self.params[f"layer{i}.bn.gamma"],
                    self.params[f"layer{i}.bn.beta"],
                    self.params[f"layer{i}.bn.running_mean"],
                    self.params[f"layer{i}.bn.running_var"],
                    mode, BN_MOMENTUM, BN_EPSILON,
                    update_stats=update_stats and mode == "train",
                )
                if update_stats and mode == "train":
                    self.params[f"layer{i}.bn.running_mean"] = new_mean
                    self.params[f"layer{i}.bn.running_var"] = new_var
            act = self.spec.activations[i]
            out = apply_activation(act, z)
            layers.append({"x": a, "z": z, "bn": bn_cache, "a": out, "act": act})
            a = out
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite network output")
        self._cache = layers
        return a[0] if squeeze else a

    def backward(self, output_grad: np.ndarray) -> tuple[GradStore, np.ndarray]:
        """Backprop through the cached forward pass.

        Returns (parameter gradients, gradient w.r.t. the forward input).
        """
        if self._cache is None:
            raise StateError("backward() before forward(); no cached activations")
        gy = np.asarray(output_grad, dtype=np.float64)
        squeeze = gy.ndim == 1
        if squeeze:
            gy = gy[None, :]
        grads = GradStore()
        da = gy
        for i in reversed(range(self.spec.n_layers)):
            layer = self._cache[i]
            dz = da * activation_grad(layer["act"], layer["z"], layer["a"])
            if layer["bn"] is not None:
                dz, dgamma, dbeta = _bn_backward(dz, layer["bn"])
                grads.add(f"layer{i}.bn.gamma", dgamma)
                grads.add(f"layer{i}.bn.beta", dbeta)
            w = self.params[f"layer{i}.W"]
            grads.add(f"layer{i}.W", layer["x"].T @ dz)
            grads.add(f"layer{i}.b", dz.sum(axis=0))
            da = dz @ w.T
        # keep GradStore complete: zero for any trainable entry not touched
        for name in self.params.trainable_names():
            if name not in grads:
                grads.add(name, np.zeros_like(self.params[name]))
        return grads, (da[0] if squeeze else da)

    def copy(self) -> "Mlp":
        return Mlp(self.spec, self.params.copy())
