"""Recurrent cells (LSTM, GRU, plain RNN) and a stacked net with BPTT.

The LSTM cell follows the three-gate formulation with combined
input+recurrent weight matrices acting on the concatenation [h_prev, x]:

    f = sigmoid(W_f [h,x] + b_f)      i = sigmoid(W_i [h,x] + b_i)
    o = sigmoid(W_o [h,x] + b_o)      c~ = tanh(W_c [h,x] + b_c)
    c = i*c~ + f*c_prev               h = o*tanh(c)

The GRU keeps separate input (W) and recurrent (U) matrices, with the reset
gate applied to the recurrent term before the tanh:

    z = sigmoid(W_z x + U_z h + b_z)  r = sigmoid(W_r x + U_r h + b_r)
    h~ = tanh(W_h x + r*(U_h h) + b_h)
    h = z*h_prev + (1-z)*h~

The stacked net feeds each layer's hidden sequence into the next layer and
maps the top layer's final hidden state through a linear head, emitting the
whole forecast horizon at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gridrl.errors import DataError, ShapeError, StateError
from gridrl.nn.activations import sigmoid
from gridrl.nn.store import GradStore, ParamStore

CELL_KINDS = ("lstm", "gru", "rnn")


# ---------------------------------------------------------------------------
# cell parameter bundles


@dataclass
class LstmCellParams:
    W_f: np.ndarray  # [hidden, hidden + input]
    W_i: np.ndarray
    W_o: np.ndarray
    W_c: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_f.shape[1] - self.W_f.shape[0]

    def __post_init__(self):
        shapes = {a.shape for a in (self.W_f, self.W_i, self.W_o, self.W_c)}
        if len(shapes) != 1:
            raise ShapeError("gate weight matrices must share one shape")
        h = self.W_f.shape[0]
        if self.W_f.shape[1] <= h:
            raise ShapeError("combined weight must be [hidden, hidden + input]")
        for b in (self.b_f, self.b_i, self.b_o, self.b_c):
            if b.shape != (h,):
                raise ShapeError("gate bias shape must be [hidden]")

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "LstmCellParams":
        w = lambda: np.zeros((hidden_size, hidden_size + input_size))
        b = lambda: np.zeros(hidden_size)
        return cls(w(), w(), w(), w(), b(), b(), b(), b())


@dataclass
class GruCellParams:
    W_z: np.ndarray  # [hidden, input]
    U_z: np.ndarray  # [hidden, hidden]
    b_z: np.ndarray
    W_r: np.ndarray
    U_r: np.ndarray
    b_r: np.ndarray
    W_h: np.ndarray
    U_h: np.ndarray
    b_h: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.W_z.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_z.shape[1]

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "GruCellParams":
        w = lambda: np.zeros((hidden_size, input_size))
        u = lambda: np.zeros((hidden_size, hidden_size))
        b = lambda: np.zeros(hidden_size)
        return cls(w(), u(), b(), w(), u(), b(), w(), u(), b())


@dataclass
class RnnCellParams:
    W: np.ndarray  # [hidden, input]
    U: np.ndarray  # [hidden, hidden]
    b: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.W.shape[0]

    @property
    def input_size(self) -> int:
        return self.W.shape[1]


def _as_batch(x, width, label):
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != width:
        raise ShapeError(f"{label}: expected width {width}, got shape {x.shape}")
    return x, squeeze


# ---------------------------------------------------------------------------
# cell steps and their backward passes


def lstm_cell_step(params: LstmCellParams, x_t, h_prev, c_prev):
    """One LSTM step. Returns (h_t, c_t, gate_cache)."""
    x, sq = _as_batch(x_t, params.input_size, "x_t")
    h, _ = _as_batch(h_prev, params.hidden_size, "h_prev")
    c, _ = _as_batch(c_prev, params.hidden_size, "c_prev")
    z = np.concatenate([h, x], axis=1)
    f = sigmoid(z @ params.W_f.T + params.b_f)
    i = sigmoid(z @ params.W_i.T + params.b_i)
    o = sigmoid(z @ params.W_o.T + params.b_o)
    c_tilde = np.tanh(z @ params.W_c.T + params.b_c)
    c_new = i * c_tilde + f * c
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c
    cache = {"z": z, "f": f, "i": i, "o": o, "c_tilde": c_tilde,
             "c_prev": c, "tanh_c": tanh_c}
    if sq:
        return h_new[0], c_new[0], cache
    return h_new, c_new, cache


def lstm_cell_backward(params: LstmCellParams, cache, dh, dc_in=None):
    """Gradients of one LSTM step.

    Returns (param_grads dict, dx, dh_prev, dc_prev)."""
    dh = np.atleast_2d(np.asarray(dh, dtype=np.float64))
    z, f, i, o = cache["z"], cache["f"], cache["i"], cache["o"]
    c_tilde, c_prev, tanh_c = cache["c_tilde"], cache["c_prev"], cache["tanh_c"]
    hs = params.hidden_size
    dc = dh * o * (1.0 - tanh_c**2)
    if dc_in is not None:
        dc = dc + np.atleast_2d(np.asarray(dc_in, dtype=np.float64))
    dpre_o = dh * tanh_c * o * (1.0 - o)
    dpre_f = dc * c_prev * f * (1.0 - f)
    dpre_i = dc * c_tilde * i * (1.0 - i)
    dpre_c = dc * i * (1.0 - c_tilde**2)
    grads = {
        "W_f": dpre_f.T @ z, "b_f": dpre_f.sum(axis=0),
        "W_i": dpre_i.T @ z, "b_i": dpre_i.sum(axis=0),
        "W_o": dpre_o.T @ z, "b_o": dpre_o.sum(axis=0),
        "W_c": dpre_c.T @ z, "b_c": dpre_c.sum(axis=0),
    }
    dz = dpre_f @ params.W_f + dpre_i @ params.W_i + dpre_o @ params.W_o + dpre_c @ params.W_c
    dh_prev = dz[:, :hs]
    dx = dz[:, hs:]
    dc_prev = dc * f
    return grads, dx, dh_prev, dc_prev


def gru_cell_step(params: GruCellParams, x_t, h_prev):
    """One GRU step. Returns (h_t, gate_cache)."""
    x, sq = _as_batch(x_t, params.input_size, "x_t")
    h, _ = _as_batch(h_prev, params.hidden_size, "h_prev")
    zg = sigmoid(x @ params.W_z.T + h @ params.U_z.T + params.b_z)
    rg = sigmoid(x @ params.W_r.T + h @ params.U_r.T + params.b_r)
    u = h @ params.U_h.T
    h_tilde = np.tanh(x @ params.W_h.T + rg * u + params.b_h)
    h_new = zg * h + (1.0 - zg) * h_tilde
    cache = {"x": x, "h_prev": h, "z": zg, "r": rg, "u": u, "h_tilde": h_tilde}
    if sq:
        return h_new[0], cache
    return h_new, cache


def gru_cell_backward(params: GruCellParams, cache, dh):
    dh = np.atleast_2d(np.asarray(dh, dtype=np.float64))
    x, h_prev = cache["x"], cache["h_prev"]
    zg, rg, u, h_tilde = cache["z"], cache["r"], cache["u"], cache["h_tilde"]
    dzg = dh * (h_prev - h_tilde)
    daz = dzg * zg * (1.0 - zg)
    dht = dh * (1.0 - zg)
    dah = dht * (1.0 - h_tilde**2)
    drg = dah * u
    dar = drg * rg * (1.0 - rg)
    du = dah * rg
    grads = {
        "W_z": daz.T @ x, "U_z": daz.T @ h_prev, "b_z": daz.sum(axis=0),
        "W_r": dar.T @ x, "U_r": dar.T @ h_prev, "b_r": dar.sum(axis=0),
        "W_h": dah.T @ x, "U_h": du.T @ h_prev, "b_h": dah.sum(axis=0),
    }
    dx = daz @ params.W_z + dar @ params.W_r + dah @ params.W_h
    dh_prev = dh * zg + daz @ params.U_z + dar @ params.U_r + du @ params.U_h
    return grads, dx, dh_prev


def rnn_cell_step(params: RnnCellParams, x_t, h_prev):
    x, sq = _as_batch(x_t, params.input_size, "x_t")
    h, _ = _as_batch(h_prev, params.hidden_size, "h_prev")
    h_new = np.tanh(x @ params.W.T + h @ params.U.T + params.b)
    cache = {"x": x, "h_prev": h, "h": h_new}
    if sq:
        return h_new[0], cache
    return h_new, cache


def rnn_cell_backward(params: RnnCellParams, cache, dh):
    dh = np.atleast_2d(np.asarray(dh, dtype=np.float64))
    da = dh * (1.0 - cache["h"]**2)
    grads = {"W": da.T @ cache["x"], "U": da.T @ cache["h_prev"], "b": da.sum(axis=0)}
    dx = da @ params.W
    dh_prev = da @ params.U
    return grads, dx, dh_prev


# ---------------------------------------------------------------------------
# stacked net

_LSTM_FIELDS = ("W_f", "W_i", "W_o", "W_c", "b_f", "b_i", "b_o", "b_c")
_GRU_FIELDS = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h")
_RNN_FIELDS = ("W", "U", "b")


@dataclass(frozen=True)
class RecurrentSpec:
    cell: str
    in_dim: int
    hidden_sizes: tuple[int, ...]
    out_dim: int

    def __post_init__(self):
        if self.cell not in CELL_KINDS:
            raise ValueError(f"unknown cell kind {self.cell!r}")
        if self.in_dim <= 0 or self.out_dim <= 0 or not self.hidden_sizes:
            raise ShapeError("dimensions must be positive and at least one layer")


def init_recurrent_params(spec: RecurrentSpec, rng: np.random.Generator) -> ParamStore:
    params = ParamStore()
    prev = spec.in_dim
    for l, hidden in enumerate(spec.hidden_sizes):
        if spec.cell == "lstm":
            limit = 1.0 / np.sqrt(hidden + prev)
            for gate in ("f", "i", "o", "c"):
                params.add(f"layer{l}.W_{gate}",
                           rng.uniform(-limit, limit, size=(hidden, hidden + prev)))
                b = rng.uniform(-limit, limit, size=hidden)
                if gate == "f":
                    # forget gate starts open so early training retains memory
                    b = b + 1.0
                params.add(f"layer{l}.b_{gate}", b)
        elif spec.cell == "gru":
            for gate in ("z", "r", "h"):
                limit_w = 1.0 / np.sqrt(prev)
                limit_u = 1.0 / np.sqrt(hidden)
                params.add(f"layer{l}.W_{gate}", rng.uniform(-limit_w, limit_w, size=(hidden, prev)))
                params.add(f"layer{l}.U_{gate}", rng.uniform(-limit_u, limit_u, size=(hidden, hidden)))
                params.add(f"layer{l}.b_{gate}", rng.uniform(-limit_u, limit_u, size=hidden))
        else:
            limit_w = 1.0 / np.sqrt(prev)
            limit_u = 1.0 / np.sqrt(hidden)
            params.add(f"layer{l}.W", rng.uniform(-limit_w, limit_w, size=(hidden, prev)))
            params.add(f"layer{l}.U", rng.uniform(-limit_u, limit_u, size=(hidden, hidden)))
            params.add(f"layer{l}.b", rng.uniform(-limit_u, limit_u, size=hidden))
        prev = hidden
    limit = 1.0 / np.sqrt(prev)
    params.add("head.W", rng.uniform(-limit, limit, size=(prev, spec.out_dim)))
    params.add("head.b", rng.uniform(-limit, limit, size=spec.out_dim))
    return params


class RecurrentNet:
    """Stacked recurrent layers plus a linear head on the final hidden state."""

    def __init__(self, spec: RecurrentSpec, params: ParamStore | None = None,
                 rng: np.random.Generator | None = None):
        self.spec = spec
        if params is None:
            params = init_recurrent_params(spec, rng or np.random.default_rng(0))
        self.params = params
        self._cache = None

    def _layer_params(self, l: int):
        p = self.params
        if self.spec.cell == "lstm":
            return LstmCellParams(*(p[f"layer{l}.{f}"] for f in _LSTM_FIELDS))
        if self.spec.cell == "gru":
            return GruCellParams(*(p[f"layer{l}.{f}"] for f in _GRU_FIELDS))
        return RnnCellParams(*(p[f"layer{l}.{f}"] for f in _RNN_FIELDS))

    def forward(self, x: np.ndarray) -> np.ndarray:
        """x: [batch, time, features] (or [time, features]); returns [batch, out]."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 2
        if squeeze:
            x = x[None, :, :]
        if x.ndim != 3 or x.shape[2] != self.spec.in_dim:
            raise ShapeError(f"expected [batch, time, {self.spec.in_dim}], got {x.shape}")
        batch, steps, _ = x.shape
        if steps == 0:
            raise DataError("empty input sequence")
        n_layers = len(self.spec.hidden_sizes)
        cells = [self._layer_params(l) for l in range(n_layers)]
        h = [np.zeros((batch, hs)) for hs in self.spec.hidden_sizes]
        c = [np.zeros((batch, hs)) for hs in self.spec.hidden_sizes]
        caches: list[list[dict]] = []
        for t in range(steps):
            inp = x[:, t, :]
            step_caches = []
            for l in range(n_layers):
                if self.spec.cell == "lstm":
                    h[l], c[l], cache = lstm_cell_step(cells[l], inp, h[l], c[l])
                elif self.spec.cell == "gru":
                    h[l], cache = gru_cell_step(cells[l], inp, h[l])
                else:
                    h[l], cache = rnn_cell_step(cells[l], inp, h[l])
                step_caches.append(cache)
                inp = h[l]
            caches.append(step_caches)
        y = h[-1] @ self.params["head.W"] + self.params["head.b"]
        self._cache = {"x": x, "caches": caches, "h_last": h[-1],
                       "cells": cells, "squeeze": squeeze}
        return y[0] if squeeze else y

    def backward(self, output_grad: np.ndarray) -> tuple[GradStore, np.ndarray]:
        """BPTT through the cached forward pass.

        Returns (parameter gradients, gradient w.r.t. the input sequence)."""
        if self._cache is None:
            raise StateError("backward() before forward(); no cached sequence")
        gy = np.asarray(output_grad, dtype=np.float64)
        if gy.ndim == 1:
            gy = gy[None, :]
        x = self._cache["x"]
        caches = self._cache["caches"]
        cells = self._cache["cells"]
        batch, steps, _ = x.shape
        n_layers = len(self.spec.hidden_sizes)

        grads = GradStore()
        grads.add("head.W", self._cache["h_last"].T @ gy)
        grads.add("head.b", gy.sum(axis=0))
        dh_time = [np.zeros((batch, hs)) for hs in self.spec.hidden_sizes]
        dc_time = [np.zeros((batch, hs)) for hs in self.spec.hidden_sizes]
        dh_time[-1] = gy @ self.params["head.W"].T
        dx_seq = np.zeros_like(x)
        for t in reversed(range(steps)):
            dx_above = None
            for l in reversed(range(n_layers)):
                dh = dh_time[l]
                if dx_above is not None:
                    dh = dh + dx_above
                if self.spec.cell == "lstm":
                    g, dx, dh_prev, dc_prev = lstm_cell_backward(
                        cells[l], caches[t][l], dh, dc_time[l])
                    dc_time[l] = dc_prev
                elif self.spec.cell == "gru":
                    g, dx, dh_prev = gru_cell_backward(cells[l], caches[t][l], dh)
                else:
                    g, dx, dh_prev = rnn_cell_backward(cells[l], caches[t][l], dh)
                for name, val in g.items():
                    grads.accumulate(f"layer{l}.{name}", val)
                dh_time[l] = dh_prev
                dx_above = dx
            dx_seq[:, t, :] = dx_above
        for name in self.params.trainable_names():
            if name not in grads:
                grads.add(name, np.zeros_like(self.params[name]))
        return grads, (dx_seq[0] if self._cache["squeeze"] else dx_seq)

    def copy(self) -> "RecurrentNet":
        return RecurrentNet(self.spec, self.params.copy())
