"""Elementwise activations and their derivatives.

The randomized-slope variant of leaky ReLU is implemented with a fixed
negative slope of 1/8 so forward passes are reproducible in train and eval
mode alike.
"""

from __future__ import annotations

import numpy as np

LEAKY_RELU_SLOPE = 0.01
RRELU_SLOPE = 0.125

ACTIVATIONS = ("relu", "leaky-relu", "rrelu", "tanh", "sigmoid", "linear")

# Output range of each activation, used to map raw actor outputs onto an
# action interval. `None` means unbounded.
ACTIVATION_RANGE: dict[str, tuple[float, float] | None] = {
    "relu": None,
    "leaky-relu": None,
    "rrelu": None,
    "tanh": (-1.0, 1.0),
    "sigmoid": (0.0, 1.0),
    "linear": None,
}


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "leaky-relu":
        return np.where(z >= 0, z, LEAKY_RELU_SLOPE * z)
    if name == "rrelu":
        return np.where(z >= 0, z, RRELU_SLOPE * z)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return sigmoid(z)
    if name == "linear":
        return z
    raise ValueError(f"unknown activation {name!r}")


def activation_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """d(activation)/dz given pre-activation z and activation a."""
    if name == "relu":
        return (z >= 0).astype(np.float64)
    if name == "leaky-relu":
        return np.where(z >= 0, 1.0, LEAKY_RELU_SLOPE)
    if name == "rrelu":
        return np.where(z >= 0, 1.0, RRELU_SLOPE)
    if name == "tanh":
        return 1.0 - a**2
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "linear":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")
