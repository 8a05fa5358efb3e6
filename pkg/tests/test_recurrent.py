import numpy as np
import pytest

from gradcheck import max_rel_error, max_rel_error_over, numeric_param_grads
from gridrl.errors import DataError, ShapeError, StateError
from gridrl.nn import (
    GruCellParams,
    LstmCellParams,
    RecurrentNet,
    RecurrentSpec,
    gru_cell_step,
    lstm_cell_step,
)


def test_lstm_zero_params_zero_cell():
    params = LstmCellParams.zeros(input_size=2, hidden_size=3)
    h, c, cache = lstm_cell_step(params, np.array([5.0, -1.0]), np.zeros(3), np.zeros(3))
    assert np.allclose(cache["f"], 0.5) and np.allclose(cache["i"], 0.5)
    assert np.allclose(cache["o"], 0.5)
    assert np.all(c == 0.0) and np.all(h == 0.0)


def test_lstm_zero_params_carries_half_cell():
    params = LstmCellParams.zeros(input_size=1, hidden_size=1)
    h, c, _ = lstm_cell_step(params, np.array([0.3]), np.zeros(1), np.array([2.0]))
    assert c[0] == pytest.approx(1.0)  # 0.5*0 + 0.5*2
    assert h[0] == pytest.approx(0.5 * np.tanh(1.0))


def test_lstm_gates_strictly_inside_unit_interval():
    rng = np.random.default_rng(0)
    for _ in range(20):
        hs, ins = rng.integers(1, 5), rng.integers(1, 5)
        params = LstmCellParams.zeros(ins, hs)
        for f in ("W_f", "W_i", "W_o", "W_c"):
            setattr(params, f, rng.normal(scale=2.0, size=(hs, hs + ins)))
        c_prev = rng.normal(size=hs)
        _, c, cache = lstm_cell_step(params, rng.normal(size=ins), rng.normal(size=hs), c_prev)
        for gate in ("f", "i", "o"):
            assert np.all(cache[gate] > 0.0) and np.all(cache[gate] < 1.0)
        # |i*c~| <= 1 elementwise, so one step grows |c| by at most 1
        assert np.all(np.abs(c) <= np.abs(c_prev) + 1.0 + 1e-12)


def test_lstm_cell_shape_mismatch():
    params = LstmCellParams.zeros(2, 3)
    with pytest.raises(ShapeError):
        lstm_cell_step(params, np.zeros(5), np.zeros(3), np.zeros(3))


def test_gru_zero_params_halves_history():
    params = GruCellParams.zeros(input_size=2, hidden_size=2)
    h_prev = np.array([0.8, -0.4])
    h, cache = gru_cell_step(params, np.array([1.0, 1.0]), h_prev)
    assert np.allclose(cache["z"], 0.5) and np.allclose(cache["r"], 0.5)
    assert np.allclose(cache["h_tilde"], 0.0)
    assert np.allclose(h, 0.5 * h_prev)


def test_gru_saturated_update_gate_copies_state():
    params = GruCellParams.zeros(input_size=1, hidden_size=2)
    params.b_z = np.full(2, 50.0)  # z ~ 1 -> copy h_prev through
    h_prev = np.array([0.3, -0.7])
    h, _ = gru_cell_step(params, np.array([2.0]), h_prev)
    assert np.allclose(h, h_prev, atol=1e-12)


@pytest.mark.parametrize("cell", ["lstm", "gru", "rnn"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_stack_gradients_match_finite_differences(cell, seed):
    rng = np.random.default_rng(10 * seed + 3)
    spec = RecurrentSpec(cell, in_dim=2, hidden_sizes=(3, 3), out_dim=2)
    net = RecurrentNet(spec, rng=rng)
    x = rng.normal(size=(2, 5, 2))  # batch 2, seq len 5
    target = rng.normal(size=(2, 2))

    def loss():
        return float(np.sum((net.forward(x) - target) ** 2))

    out = net.forward(x)
    grads, _ = net.backward(2.0 * (out - target))
    numeric = numeric_param_grads(loss, net.params)
    assert max_rel_error_over(grads, numeric) < 1e-4


def test_single_layer_length_one_reduces_to_cell_step():
    rng = np.random.default_rng(9)
    spec = RecurrentSpec("lstm", in_dim=3, hidden_sizes=(4,), out_dim=2)
    net = RecurrentNet(spec, rng=rng)
    x = rng.normal(size=(1, 1, 3))
    y = net.forward(x)
    params = LstmCellParams(*(net.params[f"layer0.{f}"] for f in
                              ("W_f", "W_i", "W_o", "W_c", "b_f", "b_i", "b_o", "b_c")))
    h, _, _ = lstm_cell_step(params, x[0, 0], np.zeros(4), np.zeros(4))
    expected = h @ net.params["head.W"] + net.params["head.b"]
    assert np.allclose(y[0], expected)


def test_zero_loss_grad_gives_zero_gradstore():
    net = RecurrentNet(RecurrentSpec("lstm", 2, (3,), 2), rng=np.random.default_rng(4))
    net.forward(np.random.default_rng(5).normal(size=(2, 3, 2)))
    grads, dx = net.backward(np.zeros((2, 2)))
    for name in grads.names():
        assert np.all(grads[name] == 0.0)
    assert np.all(dx == 0.0)


def test_empty_sequence_rejected():
    net = RecurrentNet(RecurrentSpec("gru", 2, (3,), 1))
    with pytest.raises(DataError):
        net.forward(np.zeros((1, 0, 2)))


def test_backward_requires_forward():
    net = RecurrentNet(RecurrentSpec("rnn", 2, (3,), 1))
    with pytest.raises(StateError):
        net.backward(np.ones((1, 1)))


def test_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(21)
    net = RecurrentNet(RecurrentSpec("lstm", 2, (3,), 1), rng=rng)
    x = rng.normal(size=(1, 3, 2))

    def loss():
        return float(np.sum(net.forward(x) ** 2))

    out = net.forward(x)
    _, dx = net.backward(2.0 * out)
    from gradcheck import numeric_array_grad

    assert max_rel_error(dx, numeric_array_grad(loss, x)) < 1e-4
