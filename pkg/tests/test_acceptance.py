"""Acceptance gate: one test per criterion, each printing a PASS line.

Every tolerance here is pinned; the slow end-to-end checks reuse the desk
preset. Seeds were chosen once by pilot runs and are fixed; everything below
is deterministic given the seeds.
"""

import json
import time
from dataclasses import replace

import numpy as np
import pytest

from dispatch_oracle import oracle_dispatch
from gradcheck import max_rel_error, max_rel_error_over, numeric_param_grads
from synthetic_series import regime_series, sinusoid_series

from gridrl.config import desk_preset, save_config, with_overrides
from gridrl.data import WindModelSpec
from gridrl.ddpg import DdpgAgent
from gridrl.env import build_world, train_wind_forecaster
from gridrl.forecast import (
    ForecasterConfig,
    eval_metrics,
    make_windows,
    persistence_prediction,
    train_forecaster,
)
from gridrl.market import WindPlantSpec, check_power_balance, default_generators, economic_dispatch
from gridrl.nn import (
    GruCellParams,
    LstmCellParams,
    Mlp,
    MlpSpec,
    RecurrentNet,
    RecurrentSpec,
    gru_cell_backward,
    gru_cell_step,
    lstm_cell_backward,
    lstm_cell_step,
)
from gridrl.retail import BatterySpec, battery_step
from test_ddpg import quadratic_bowl_run, tiny_config


def report(criterion: str, detail: str = "") -> None:
    print(f"\nACCEPTANCE PASS [{criterion}] {detail}")


# -- criterion 1: dispatch oracle -------------------------------------------


def test_criterion_1_dispatch_oracle():
    start = time.time()
    gens = default_generators()
    wind = WindPlantSpec()
    # worked cases
    res = economic_dispatch(20.0, 0.0, gens, wind)
    assert abs(res.lmp - 18.5) < 1e-9 and abs(res.outputs["G1"] - 15.0) < 1e-9
    res = economic_dispatch(10.0, 0.0, gens, wind)
    assert abs(res.lmp - 14.0) < 1e-9
    res = economic_dispatch(20.0, 30.0, gens, wind)
    assert abs(res.lmp - 5.0) < 1e-9

    rng = np.random.default_rng(2024)
    worst_cost = worst_lmp = 0.0
    for _ in range(200):
        demand = float(rng.uniform(0.0, 115.0))
        avail = float(rng.uniform(0.0, 50.0))
        got = economic_dispatch(demand, avail, gens, wind)
        oracle = oracle_dispatch(demand, avail, gens[0], gens[1], wind)
        assert oracle is not None and got.feasible
        cost, _, _, _, lmp = oracle
        worst_cost = max(worst_cost, abs(got.total_variable_cost - cost))
        worst_lmp = max(worst_lmp, abs(got.lmp - lmp))
        assert check_power_balance(got, demand, tol=1e-6)
    elapsed = time.time() - start
    assert worst_cost < 1e-3 and worst_lmp < 1e-3
    assert elapsed < 10.0
    report("1 dispatch-oracle",
           f"200 cases, max cost err {worst_cost:.2e} $, max lmp err {worst_lmp:.2e} $/MWh, "
           f"{elapsed:.1f}s")


# -- criterion 2: gradient suite ---------------------------------------------


def _check_mlp(seed):
    rng = np.random.default_rng(seed)
    spec = MlpSpec(3, (4, 3, 1), ("tanh", "leaky-relu", "linear"))
    net = Mlp(spec, rng=rng)
    x = rng.normal(size=(3, 3))

    def loss():
        return float(np.sum(net.forward(x, mode="eval") ** 2))

    out = net.forward(x, mode="eval")
    grads, _ = net.backward(2.0 * out)
    return max_rel_error_over(grads, numeric_param_grads(loss, net.params))


def _check_lstm_cell(seed):
    rng = np.random.default_rng(seed)
    params = LstmCellParams.zeros(2, 3)
    store_fields = ["W_f", "W_i", "W_o", "W_c", "b_f", "b_i", "b_o", "b_c"]
    for f in store_fields:
        setattr(params, f, rng.normal(scale=0.6, size=getattr(params, f).shape))
    x, h0, c0 = rng.normal(size=(1, 2)), rng.normal(size=(1, 3)), rng.normal(size=(1, 3))
    u = rng.normal(size=(1, 3))

    def loss():
        h, c, _ = lstm_cell_step(params, x, h0, c0)
        return float(np.sum(h * u))

    _, _, cache = lstm_cell_step(params, x, h0, c0)
    grads, _, _, _ = lstm_cell_backward(params, cache, u)
    worst = 0.0
    for f in store_fields:
        arr = getattr(params, f)
        from gradcheck import numeric_array_grad

        numeric = numeric_array_grad(loss, arr)
        worst = max(worst, max_rel_error(grads[f], numeric))
    return worst


def _check_stack(cell, seed):
    rng = np.random.default_rng(seed)
    spec = RecurrentSpec(cell, in_dim=2, hidden_sizes=(3, 3), out_dim=2)
    net = RecurrentNet(spec, rng=rng)
    x = rng.normal(size=(2, 4, 2))
    target = rng.normal(size=(2, 2))

    def loss():
        return float(np.sum((net.forward(x) - target) ** 2))

    out = net.forward(x)
    grads, _ = net.backward(2.0 * (out - target))
    return max_rel_error_over(grads, numeric_param_grads(loss, net.params))


def _check_gru_cell(seed):
    rng = np.random.default_rng(seed)
    params = GruCellParams.zeros(2, 3)
    fields = ["W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h"]
    for f in fields:
        setattr(params, f, rng.normal(scale=0.6, size=getattr(params, f).shape))
    x, h0 = rng.normal(size=(1, 2)), rng.normal(size=(1, 3))
    u = rng.normal(size=(1, 3))

    def loss():
        h, _ = gru_cell_step(params, x, h0)
        return float(np.sum(h * u))

    _, cache = gru_cell_step(params, x, h0)
    grads, _, _ = gru_cell_backward(params, cache, u)
    worst = 0.0
    from gradcheck import numeric_array_grad

    for f in fields:
        worst = max(worst, max_rel_error(grads[f], numeric_array_grad(loss, getattr(params, f))))
    return worst


def _check_batchnorm(seed):
    rng = np.random.default_rng(seed)
    spec = MlpSpec(3, (4, 1), ("rrelu", "linear"), batch_norm_layers=frozenset({0}))
    net = Mlp(spec, rng=rng)
    net.params["layer0.bn.gamma"] = rng.uniform(0.5, 1.5, size=4)
    net.params["layer0.bn.beta"] = rng.normal(size=4)
    x = rng.normal(size=(5, 3))

    def loss():
        return float(np.sum(net.forward(x, mode="train", update_stats=False) ** 2))

    out = net.forward(x, mode="train", update_stats=False)
    grads, _ = net.backward(2.0 * out)
    return max_rel_error_over(grads, numeric_param_grads(loss, net.params))


def _check_composed(seed):
    cfg = tiny_config(batch_norm=True)
    agent = DdpgAgent(cfg, np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 1000)
    obs = rng.normal(size=(5, 2))

    def objective():
        raw = agent.actor.forward(obs, mode="train", update_stats=False)
        action = agent._map_action(raw)
        x = np.concatenate([obs, agent._normalize_action(action)], axis=1)
        return float(np.mean(agent.critic.forward(x, mode="train", update_stats=False)))

    raw = agent.actor.forward(obs, mode="train", update_stats=False)
    action = agent._map_action(raw)
    x = np.concatenate([obs, agent._normalize_action(action)], axis=1)
    q = agent.critic.forward(x, mode="train", update_stats=False)
    _, dx = agent.critic.backward(np.full_like(q, 1.0 / q.shape[0]))
    d_action = dx[:, cfg.obs_dim:] * (2.0 / (np.array(cfg.act_high) - np.array(cfg.act_low)))
    grads, _ = agent.actor.backward(d_action * agent._map_jacobian())
    return max_rel_error_over(grads, numeric_param_grads(objective, agent.actor.params))


def test_criterion_2_gradient_suite():
    start = time.time()
    seeds = range(20)
    checks = {
        "mlp": (_check_mlp, 1e-4),
        "lstm-cell": (_check_lstm_cell, 1e-4),
        "lstm-stack-bptt": (lambda s: _check_stack("lstm", s), 1e-4),
        "gru": (_check_gru_cell, 1e-4),
        "rnn-stack": (lambda s: _check_stack("rnn", s), 1e-4),
        "batchnorm": (_check_batchnorm, 1e-4),
        "actor-through-critic": (_check_composed, 1e-3),
    }
    worst = {}
    for name, (fn, tol) in checks.items():
        errs = [fn(seed) for seed in seeds]
        worst[name] = max(errs)
        assert worst[name] < tol, f"{name}: max rel err {worst[name]:.2e} >= {tol}"
    elapsed = time.time() - start
    assert elapsed < 60.0
    detail = ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
    report("2 gradient-suite", f"20 seeds each, {detail}, {elapsed:.1f}s")


# -- criterion 3: DDPG toy convergence ---------------------------------------


def test_criterion_3_ddpg_toy_convergence():
    start = time.time()
    finals = {seed: quadratic_bowl_run(seed) for seed in (0, 1, 2)}
    for seed, final in finals.items():
        assert abs(final - 0.7) < 0.05, f"seed {seed}: |{final} - 0.7| >= 0.05"
    elapsed = time.time() - start
    assert elapsed < 30.0
    summary = {k: round(v, 3) for k, v in finals.items()}
    report("3 ddpg-toy", f"3/3 seeds, finals {summary}, {elapsed:.1f}s")


# -- criterion 4: accounting closure -----------------------------------------


def test_criterion_4_accounting_closure():
    start = time.time()
    base = desk_preset(seed=11)
    cfg = with_overrides(
        base, episodes=50, eval_window=50, forecast_case="uncertainty_margin",
        pa_reward_scale=1.0,
        forecaster=replace(base.forecaster, hidden_sizes=(8,), epochs=1, train_days=5),
    )
    from gridrl.env import MarketEnv, build_world, day_ahead_wind_forecasts

    world = build_world(cfg)
    env = MarketEnv(cfg, world, day_ahead_wind_forecasts(cfg, world, None))
    rng = np.random.default_rng(77)
    cohorts = [p.cohort_size for p in cfg.prosumers]
    checked = 0
    for episode in range(cfg.episodes):
        env.reset(episode)
        done = False
        while not done:
            cs = float(rng.uniform(cfg.price_min, cfg.price_max))
            done = env.step(cs, cs, rng.uniform(-3.0, 3.0, size=len(cohorts))).done
        log = env.log
        for t in range(log.steps_filled):
            # ledger closure: every dollar once, with opposite signs
            cohort_flows = [log.pros_bill[i, t] * cohorts[i] for i in range(len(cohorts))]
            bus_total_kw = log.l_d_kw[t] - sum(
                log.pros_e[i, t] * cohorts[i] for i in range(len(cohorts)))
            bus_flow = bus_total_kw * log.cb[t] * cfg.dt_hours
            pos = bus_flow + sum(max(f, 0.0) for f in cohort_flows)
            neg = sum(-min(f, 0.0) for f in cohort_flows)
            scale_rev = max(1.0, abs(log.revenue[t]))
            assert abs(log.revenue[t] - pos) <= 1e-9 * scale_rev
            assert abs(log.buyback_cost[t] - neg) <= 1e-9 * max(1.0, abs(log.buyback_cost[t]))
            # power balance on the logged dispatch row
            assert env.verify_step_consistency(t, tol=1e-9)
            checked += 1
        # reward/bill duality, exact
        for i in range(len(cohorts)):
            assert np.sum(log.pros_reward[i]) == -np.sum(log.pros_bill[i])
    elapsed = time.time() - start
    report("4 accounting-closure",
           f"{checked} intervals over 50 episodes, closure and balance at 1e-9, "
           f"duality exact, {elapsed:.0f}s")


# -- criterion 5: battery invariants -----------------------------------------


def test_criterion_5_battery_invariants():
    spec = BatterySpec()
    rng = np.random.default_rng(99)
    soc = spec.soc0
    for _ in range(10_000):
        _, soc = battery_step(spec, soc, float(rng.uniform(-6.0, 6.0)))
        assert spec.soc_min <= soc <= spec.soc_max
    _, up = battery_step(spec, 0.5, -2.0, dt=0.25)
    _, back = battery_step(spec, up, 2.0, dt=0.25)
    assert abs(back - 0.5) < 1e-12
    report("5 battery-invariants", "1e4-step fuzz in band, round trip < 1e-12")


# -- criterion 6: forecaster floor -------------------------------------------


def test_criterion_6_forecaster_floor():
    start = time.time()
    # metric formulas on the hand-computed triples first
    m = eval_metrics([0.0, 0.0], [3.0, 4.0])
    assert abs(m["rmse"] - np.sqrt(12.5)) < 1e-12
    assert abs(m["mae"] - 3.5) < 1e-12
    assert abs(m["mape"] - 100.0) < 1e-12

    sigma = 2.0
    train, test = make_windows(sinusoid_series(40, noise=sigma, seed=1), 24, 24, 0.8)
    model = train_forecaster(train, ForecasterConfig(
        hidden_sizes=(16, 16), epochs=30, batch_size=64, learning_rate=0.005, seed=0))
    lstm_rmse = eval_metrics(model.predict(test.inputs), test.targets)["rmse"]
    persistence_rmse = eval_metrics(persistence_prediction(test), test.targets)["rmse"]
    elapsed = time.time() - start
    assert lstm_rmse <= 1.5 * sigma
    assert lstm_rmse < persistence_rmse
    assert elapsed < 300.0
    report("6 forecaster-floor",
           f"lstm rmse {lstm_rmse:.3f} <= 1.5*sigma={1.5 * sigma}, "
           f"persistence {persistence_rmse:.3f}, {elapsed:.0f}s")


# -- criterion 7: architecture ordering --------------------------------------


def test_criterion_7_architecture_ordering():
    start = time.time()
    records = regime_series(days=60, seed=100)
    train, test = make_windows(records, 24, 24, 0.8)
    held = 0
    rows = []
    for train_seed in (0, 1, 2):
        rmse = {}
        for cell in ("lstm", "gru", "rnn"):
            model = train_forecaster(train, ForecasterConfig(
                hidden_sizes=(16, 16), cell=cell, epochs=25, batch_size=64,
                learning_rate=0.005, seed=train_seed))
            rmse[cell] = eval_metrics(model.predict(test.inputs), test.targets)["rmse"]
        ordered = rmse["lstm"] <= rmse["gru"] <= rmse["rnn"]
        held += ordered
        rows.append(f"seed{train_seed}: L={rmse['lstm']:.3f} G={rmse['gru']:.3f} "
                    f"R={rmse['rnn']:.3f} {'ok' if ordered else 'x'}")
    elapsed = time.time() - start
    assert held >= 2, f"ordering held on {held}/3 seeds: {rows}"
    report("7 architecture-ordering", f"{held}/3 seeds, {'; '.join(rows)}, {elapsed:.0f}s")


# -- criterion 9: case comparison --------------------------------------------


# -- criterion 8: end-to-end ordering ----------------------------------------


@pytest.mark.slow
def test_criterion_8_end_to_end_ordering():
    start = time.time()
    from gridrl.scenarios import (
        builtin_policies,
        compare_scenarios,
        comparison_csv,
        run_baseline,
    )

    cfg = desk_preset(seed=0)  # 200 episodes, 3 prosumer cohorts, eval window 50
    world = build_world(cfg)
    forecaster, _ = train_wind_forecaster(cfg, world)
    policies = builtin_policies()

    reports = {}
    results = {}
    for name in ("dynamic_lstm", "fixed", "tou_a", "tou_b", "dynamic_margin"):
        report_row, result = run_baseline(policies[name], cfg, world=world,
                                          forecaster=forecaster)
        reports[name] = report_row
        results[name] = result

    table = compare_scenarios(list(reports.values()))
    print("\nfive-way comparison (last 50 common-random-number episodes):")
    print(comparison_csv(table))

    dyn, fix = reports["dynamic_lstm"], reports["fixed"]
    elapsed = time.time() - start
    # gating pairwise relation; the full ordering above is reported only
    assert dyn.profit_mean > fix.profit_mean, (
        f"profit ordering failed: {dyn.profit_mean} <= {fix.profit_mean}")
    assert dyn.par_mean < fix.par_mean, (
        f"PAR ordering failed: {dyn.par_mean} >= {fix.par_mean}")

    # learning progress: smoothed pricing-agent return, final vs first quartile
    returns = results["dynamic_lstm"].metric_series("lsa_return")
    smoothed = np.convolve(returns, np.ones(20) / 20, mode="valid")
    quarter = len(smoothed) // 4
    assert smoothed[-quarter:].mean() > smoothed[:quarter].mean()

    assert elapsed < 1200.0
    report("8 end-to-end",
           f"profit {dyn.profit_mean:.0f} > {fix.profit_mean:.0f}, "
           f"par {dyn.par_mean:.3f} < {fix.par_mean:.3f}, "
           f"ranking {table['ranking']}, {elapsed:.0f}s")


def test_criterion_10_cli_determinism(tmp_path):
    start = time.time()
    from gridrl.cli import run_command

    base = desk_preset(seed=5)
    cfg = with_overrides(
        base, episodes=2, eval_window=2,
        forecaster=replace(base.forecaster, hidden_sizes=(8,), epochs=2, train_days=5),
        profile=replace(base.profile, days=5),
    )
    cfg_path = tmp_path / "config.json"
    save_config(cfg, cfg_path)
    outputs = []
    for label in ("a", "b"):
        out = tmp_path / f"run_{label}"
        code = run_command(["train-agents", "--config", str(cfg_path),
                            "--pricing", "dynamic_lstm", "--out", str(out)])
        assert code == 0
        outputs.append(out)
    a, b = outputs
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
    assert (a / "episode_final.json").read_bytes() == (b / "episode_final.json").read_bytes()
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["config_hash"] == mb["config_hash"]
    assert ma["profit_mean"] == mb["profit_mean"]

    synth = []
    for label in ("c", "d"):
        out = tmp_path / f"synth_{label}"
        assert run_command(["synth-data", "--config", str(cfg_path), "--out", str(out)]) == 0
        synth.append((out / "wind.csv").read_bytes())
    assert synth[0] == synth[1]
    elapsed = time.time() - start
    report("10 cli-determinism",
           f"repeat runs byte-identical (metrics, logs, wind csv), {elapsed:.0f}s")


def test_criterion_9_case_comparison():
    start = time.time()
    from gridrl.scenarios import run_case_comparison

    base = desk_preset(seed=7)
    wind = WindModelSpec(regime_levels=(1.0, 0.45), regime_switch_prob=0.45,
                         temp_cue=True, temp_cue_gain=12.0, ar1_sigma=0.5,
                         power_noise_sigma=0.8)
    cfg = with_overrides(base, episodes=40, eval_window=40,
                         profile=replace(base.profile, wind=wind))
    out = run_case_comparison(cfg, zero_actions=True)
    # contract: the report carries the mean |rho_RT - rho_DA| for each case
    assert "mean_abs_lmp_gap" in out["uncertainty_margin"]
    assert "mean_abs_lmp_gap" in out["lstm_engine"]

    # classify episodes by whether the wind regime shifted overnight
    world = build_world(cfg)
    shift, repeat = [], []
    for e in range(cfg.episodes):
        d = world.episode_day(e)
        (shift if world.regime_factors[d] != world.regime_factors[d - 1] else repeat).append(e)
    assert shift and repeat

    band = np.array(out["uncertainty_margin"]["per_episode_gap"])
    lstm = np.array(out["lstm_engine"]["per_episode_gap"])
    shift_band, shift_lstm = band[shift].mean(), lstm[shift].mean()
    diff_shift = shift_band - shift_lstm
    diff_repeat = band[repeat].mean() - lstm[repeat].mean()
    elapsed = time.time() - start
    assert shift_band > shift_lstm, "band gap must exceed engine gap on shift days"
    assert diff_repeat < diff_shift, "gap difference must narrow on repeat days"
    report("9 case-comparison",
           f"shift |rho_RT - rho_DA|: band {shift_band:.3f} > lstm {shift_lstm:.3f}; "
           f"difference narrows {diff_shift:.3f} -> {diff_repeat:.3f} on repeat days, "
           f"{elapsed:.0f}s")
