import numpy as np
import pytest

from gridrl.errors import NumericError
from gridrl.nn import GradStore, ParamStore, make_optimizer, optimizer_step, soft_update


def single_param(value=1.0):
    ps = ParamStore()
    ps.add("w", np.array([value]))
    return ps


def grad_of(value):
    gs = GradStore()
    gs.add("w", np.array([value]))
    return gs


def test_vanilla_sgd():
    ps = single_param(1.0)
    opt = make_optimizer("sgd_momentum", ps, learning_rate=0.1, momentum=0.0)
    optimizer_step(opt, ps, grad_of(2.0), "descent")
    assert ps["w"][0] == pytest.approx(0.8)
    assert opt.step_count == 1


def test_sgd_momentum_accumulates():
    ps = single_param(0.0)
    opt = make_optimizer("sgd_momentum", ps, learning_rate=1.0, momentum=0.5)
    optimizer_step(opt, ps, grad_of(1.0))  # v=1, w=-1
    optimizer_step(opt, ps, grad_of(1.0))  # v=1.5, w=-2.5
    assert ps["w"][0] == pytest.approx(-2.5)


def test_ascent_mirrors_descent():
    ps = single_param(1.0)
    opt = make_optimizer("sgd_momentum", ps, learning_rate=0.1)
    optimizer_step(opt, ps, grad_of(2.0), "ascent")
    assert ps["w"][0] == pytest.approx(1.2)


def test_adam_first_step_is_lr():
    # bias-corrected first/second moments give a unit ratio up to epsilon:
    # m_hat = g, v_hat = g^2, step = -lr * g/(|g|+eps)
    ps = single_param(0.0)
    opt = make_optimizer("adam", ps, learning_rate=0.001)
    optimizer_step(opt, ps, grad_of(1.0))
    assert ps["w"][0] == pytest.approx(-0.001, rel=1e-6)


def test_adam_constant_gradient_keeps_unit_ratio():
    ps = single_param(0.0)
    opt = make_optimizer("adam", ps, learning_rate=0.001)
    for _ in range(5):
        optimizer_step(opt, ps, grad_of(1.0))
    assert ps["w"][0] == pytest.approx(-0.005, rel=1e-5)


def test_adamw_adds_decoupled_decay():
    ps_adam = single_param(1.0)
    opt_adam = make_optimizer("adam", ps_adam, learning_rate=0.001)
    optimizer_step(opt_adam, ps_adam, grad_of(1.0))

    ps_w = single_param(1.0)
    opt_w = make_optimizer("adamw", ps_w, learning_rate=0.001, weight_decay=0.01)
    optimizer_step(opt_w, ps_w, grad_of(1.0))
    # identical to adam plus -lr*wd*param
    assert ps_w["w"][0] == pytest.approx(ps_adam["w"][0] - 0.001 * 0.01 * 1.0, abs=1e-15)


def test_zero_gradient_zero_velocity_is_fixed_point():
    ps = single_param(3.0)
    opt = make_optimizer("sgd_momentum", ps, learning_rate=0.1, momentum=0.9)
    optimizer_step(opt, ps, grad_of(0.0))
    assert ps["w"][0] == 3.0


def test_nan_gradient_names_parameter():
    ps = single_param(1.0)
    opt = make_optimizer("adam", ps, learning_rate=0.001)
    with pytest.raises(NumericError, match="'w'"):
        optimizer_step(opt, ps, grad_of(np.nan))
    # rejected before any state was touched
    assert opt.step_count == 0
    assert ps["w"][0] == 1.0


def test_descent_reduces_linear_loss_to_first_order():
    rng = np.random.default_rng(0)
    ps = ParamStore()
    ps.add("w", rng.normal(size=(4,)))
    direction = rng.normal(size=(4,))
    gs = GradStore()
    gs.add("w", direction)
    before = float(direction @ ps["w"])
    opt = make_optimizer("adam", ps, learning_rate=1e-4)
    optimizer_step(opt, ps, gs, "descent")
    after = float(direction @ ps["w"])
    assert after < before


def test_soft_update_formula_and_fixed_point():
    target = single_param(0.0)
    online = single_param(1.0)
    soft_update(target, online, tau=0.005)
    assert target["w"][0] == pytest.approx(0.005)

    target2 = single_param(1.0)
    soft_update(target2, online, tau=1.0)
    assert target2["w"][0] == 1.0

    target3 = single_param(0.7)
    online3 = single_param(0.7)
    soft_update(target3, online3, tau=0.3)
    assert target3["w"][0] == pytest.approx(0.7)


def test_soft_update_is_contraction():
    rng = np.random.default_rng(1)
    target = ParamStore()
    online = ParamStore()
    v_t, v_o = rng.normal(size=3), rng.normal(size=3)
    target.add("w", v_t)
    online.add("w", v_o)
    tau = 0.02
    soft_update(target, online, tau)
    assert np.allclose(np.abs(target["w"] - v_o), (1 - tau) * np.abs(v_t - v_o))
