"""SGD-with-momentum, Adam, and AdamW updates over a ParamStore."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gridrl.errors import NumericError, ShapeError
from gridrl.nn.store import GradStore, ParamStore

KINDS = ("sgd_momentum", "adam", "adamw")


@dataclass
class OptimizerState:
    kind: str
    learning_rate: float
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    slots: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    step_count: int = 0


def make_optimizer(kind: str, params: ParamStore, learning_rate: float,
                   momentum: float = 0.0, beta1: float = 0.9, beta2: float = 0.999,
                   epsilon: float = 1e-8, weight_decay: float = 0.0) -> OptimizerState:
    """Allocate zeroed slots mirroring every trainable parameter."""
    if kind not in KINDS:
        raise ValueError(f"unknown optimizer kind {kind!r}")
    slots: dict[str, dict[str, np.ndarray]] = {}
    for name in params.trainable_names():
        shape = params[name].shape
        if kind == "sgd_momentum":
            slots[name] = {"velocity": np.zeros(shape)}
        else:
            slots[name] = {"m": np.zeros(shape), "v": np.zeros(shape)}
    return OptimizerState(
        kind=kind, learning_rate=learning_rate, momentum=momentum,
        beta1=beta1, beta2=beta2, epsilon=epsilon, weight_decay=weight_decay,
        slots=slots,
    )


def optimizer_step(opt: OptimizerState, params: ParamStore, grads: GradStore,
                   direction: str = "descent") -> ParamStore:
    """One parameter update; `ascent` negates the gradient.

    Decoupled weight decay (adamw) always pulls parameters toward zero,
    independent of direction.
    """
    if direction not in ("descent", "ascent"):
        raise ValueError(f"direction must be 'descent' or 'ascent', got {direction!r}")
    sign = 1.0 if direction == "descent" else -1.0
    for name in grads.names():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        if name not in opt.slots:
            raise KeyError(f"optimizer has no slot for {name!r}")
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient shape {g.shape} != param shape "
                             f"{params[name].shape} for {name!r}")
    opt.step_count += 1
    t = opt.step_count
    lr = opt.learning_rate
    for name in grads.names():
        g = sign * grads[name]
        p = params[name]
        slot = opt.slots[name]
        if opt.kind == "sgd_momentum":
            v = opt.momentum * slot["velocity"] + g
            slot["velocity"] = v
            new = p - lr * v
        else:
            m = opt.beta1 * slot["m"] + (1.0 - opt.beta1) * g
            v = opt.beta2 * slot["v"] + (1.0 - opt.beta2) * g**2
            slot["m"], slot["v"] = m, v
            m_hat = m / (1.0 - opt.beta1**t)
            v_hat = v / (1.0 - opt.beta2**t)
            new = p - lr * m_hat / (np.sqrt(v_hat) + opt.epsilon)
            if opt.kind == "adamw" and opt.weight_decay:
                new = new - lr * opt.weight_decay * p
        params[name] = new
    return params


def optimizer_to_document(opt: OptimizerState) -> dict:
    return {
        "kind": opt.kind,
        "learning_rate": opt.learning_rate,
        "momentum": opt.momentum,
        "beta1": opt.beta1,
        "beta2": opt.beta2,
        "epsilon": opt.epsilon,
        "weight_decay": opt.weight_decay,
        "step_count": opt.step_count,
        "slots": {
            name: {slot: arr.ravel().tolist() for slot, arr in slots.items()}
            for name, slots in opt.slots.items()
        },
        "slot_shapes": {name: list(next(iter(slots.values())).shape)
                        for name, slots in opt.slots.items()},
    }


def optimizer_from_document(doc: dict) -> OptimizerState:
    slots = {}
    for name, entry in doc["slots"].items():
        shape = doc["slot_shapes"][name]
        slots[name] = {slot: np.array(vals, dtype=np.float64).reshape(shape)
                       for slot, vals in entry.items()}
    return OptimizerState(
        kind=doc["kind"], learning_rate=doc["learning_rate"], momentum=doc["momentum"],
        beta1=doc["beta1"], beta2=doc["beta2"], epsilon=doc["epsilon"],
        weight_decay=doc["weight_decay"], slots=slots, step_count=doc["step_count"],
    )


def soft_update(target: ParamStore, online: ParamStore, tau: float) -> ParamStore:
    """Blend target toward online: theta' <- tau*theta + (1-tau)*theta'.

    Applied to every entry including batch-norm running statistics so the
    target network stays self-consistent.
    """
    if sorted(target.names()) != sorted(online.names()):
        raise ShapeError("target and online parameter names differ")
    for name in target.names():
        if target[name].shape != online[name].shape:
            raise ShapeError(f"shape mismatch for {name!r}")
        target[name] = tau * online[name] + (1.0 - tau) * target[name]
    return target
