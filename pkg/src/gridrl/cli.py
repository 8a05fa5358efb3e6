"""Command-line surface: data synthesis, training, evaluation, comparison.

Every subcommand writes its outputs plus a run manifest into --out. The
manifest records the byte hash of the stored config copy, the seed, and the
artifact paths, which is enough to reproduce the run bit for bit (metrics
CSVs are deterministic given config and seed).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from gridrl import __version__
from gridrl.config import (
    ScenarioConfig,
    config_to_json,
    default_config,
    load_config,
    named_rng,
    with_overrides,
)
from gridrl.data import load_wind_csv, synthesize_wind, write_wind_csv
from gridrl.ddpg import DdpgAgent
from gridrl.env import (
    ObservationNormalizer,
    build_world,
    make_lsa_agent_config,
    make_pa_agent_config,
    run_training,
    train_wind_forecaster,
)
from gridrl.errors import DataError
from gridrl.forecast import (
    ForecasterModel,
    Scaler,
    impute_missing,
    predict_day_ahead,
    resample_hourly,
)
from gridrl.nn import RecurrentNet, RecurrentSpec, load_checkpoint, save_checkpoint
from gridrl.scenarios import (
    builtin_policies,
    compare_scenarios,
    comparison_csv,
    comparison_json,
    report_from_result,
    run_baseline,
)


def _fmt(x) -> str:
    return repr(float(x))


def write_manifest(out_dir: Path, command: str, config_text: str, seed: int,
                   artifacts: dict[str, str], extra: dict | None = None) -> Path:
    (out_dir / "config.json").write_text(config_text, encoding="utf-8")
    manifest = {
        "command": command,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "gridrl_version": __version__,
        "config_hash": hashlib.sha256(config_text.encode("utf-8")).hexdigest(),
        "seed": seed,
        "artifacts": artifacts,
        **(extra or {}),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    return path


def _load_config_arg(args) -> tuple[ScenarioConfig, str]:
    if args.config:
        config = load_config(args.config)
    else:
        config = default_config()
    if getattr(args, "seed", None) is not None:
        config = with_overrides(config, seed=args.seed)
    if getattr(args, "episodes", None) is not None:
        config = with_overrides(config, episodes=args.episodes)
    return config, config_to_json(config)


def _out_dir(args) -> Path:
    import os

    out = Path(args.out if args.out else os.environ.get("GRIDRL_OUT_DIR", "runs/out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# model persistence (forecaster)


def save_forecaster(model: ForecasterModel, path: Path, metrics: dict) -> None:
    extra = {
        "cell": model.net.spec.cell,
        "in_dim": model.net.spec.in_dim,
        "hidden_sizes": list(model.net.spec.hidden_sizes),
        "out_dim": model.net.spec.out_dim,
        "feature_scaler": model.feature_scaler.to_dict(),
        "target_scaler": model.target_scaler.to_dict(),
        "window_len": model.window_len,
        "horizon": model.horizon,
        "wp_max": model.wp_max,
        "epoch_losses": model.epoch_losses,
        "metrics": {k: v for k, v in metrics.items() if v is not None},
    }
    save_checkpoint(path, {"net": model.net.params}, extra=extra)


def load_forecaster(path: Path) -> ForecasterModel:
    stores, extra = load_checkpoint(path)
    spec = RecurrentSpec(extra["cell"], extra["in_dim"],
                         tuple(extra["hidden_sizes"]), extra["out_dim"])
    net = RecurrentNet(spec, params=stores["net"])
    return ForecasterModel(
        net=net,
        feature_scaler=Scaler.from_dict(extra["feature_scaler"]),
        target_scaler=Scaler.from_dict(extra["target_scaler"]),
        window_len=int(extra["window_len"]), horizon=int(extra["horizon"]),
        wp_max=float(extra["wp_max"]), epoch_losses=list(extra["epoch_losses"]),
    )


def save_agent(agent: DdpgAgent, normalizer: ObservationNormalizer, path: Path) -> None:
    stores, extra = agent.state_documents()
    extra["normalizer"] = normalizer.state_dict()
    save_checkpoint(path, stores, extra=extra)


def load_agent(agent: DdpgAgent, normalizer: ObservationNormalizer, path: Path) -> None:
    stores, extra = load_checkpoint(path)
    agent.restore(stores, extra)
    normalizer.load_state(extra["normalizer"])


# ---------------------------------------------------------------------------
# metrics CSV


def metrics_csv_text(metrics: list[dict]) -> str:
    if not metrics:
        return ""
    cols = list(metrics[0].keys())
    lines = [",".join(cols)]
    for row in metrics:
        cells = []
        for c in cols:
            v = row[c]
            cells.append(_fmt(v) if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth_data(args) -> int:
    config, text = _load_config_arg(args)
    out = _out_dir(args)
    seed = int(named_rng(config.seed, "wind-data").integers(0, 2**31 - 1))
    records = synthesize_wind(config.profile, seed)
    csv_path = out / "wind.csv"
    write_wind_csv(records, csv_path)
    write_manifest(out, "synth-data", text, config.seed, {"wind_csv": str(csv_path)},
                   extra={"records": len(records)})
    print(f"wrote {len(records)} records to {csv_path}")
    return 0


def _records_from_args(config, args):
    if getattr(args, "data", None):
        records = load_wind_csv(args.data)
    else:
        seed = int(named_rng(config.seed, "wind-data").integers(0, 2**31 - 1))
        records = synthesize_wind(config.profile, seed)
    return impute_missing(resample_hourly(records), k=5)


def cmd_train_lstm(args) -> int:
    config, text = _load_config_arg(args)
    out = _out_dir(args)
    from gridrl.forecast import ForecasterConfig, eval_metrics, make_windows, train_forecaster

    hourly = _records_from_args(config, args)
    fc = config.forecaster
    train, test = make_windows(hourly, fc.window_len, fc.horizon, 0.8)
    model = train_forecaster(train, ForecasterConfig(
        hidden_sizes=fc.hidden_sizes, epochs=fc.epochs, batch_size=fc.batch_size,
        learning_rate=fc.learning_rate,
        seed=int(named_rng(config.seed, "lstm").integers(2**31)),
        wp_max=config.wind_plant.p_max, grad_clip=fc.grad_clip))
    metrics = eval_metrics(model.predict(test.inputs), test.targets) if len(test) else {}
    model_path = out / "forecaster.json"
    save_forecaster(model, model_path, metrics)
    metrics_path = out / "forecaster_metrics.json"
    metrics_path.write_text(json.dumps(
        {k: v for k, v in metrics.items()}, indent=2, sort_keys=True), encoding="utf-8")
    write_manifest(out, "train-lstm", text, config.seed,
                   {"model": str(model_path), "metrics": str(metrics_path)},
                   extra={"final_rmse": metrics.get("rmse")})
    rmse = metrics.get("rmse")
    print(f"trained forecaster; test rmse={rmse!r} -> {model_path}")
    return 0


def cmd_forecast(args) -> int:
    config, text = _load_config_arg(args)
    out = _out_dir(args)
    model_path = Path(args.model)
    if not model_path.exists():
        raise DataError(f"missing forecaster checkpoint: {model_path}")
    model = load_forecaster(model_path)
    hourly = _records_from_args(config, args)
    if len(hourly) < model.window_len:
        raise DataError(f"need {model.window_len} hourly records, got {len(hourly)}")
    history = hourly[-model.window_len:]
    values = predict_day_ahead(model, history)
    doc = {
        "forecast_mw": [float(v) for v in values],
        "model_id": hashlib.sha256(model_path.read_bytes()).hexdigest()[:16],
        "issued_at": datetime.now(timezone.utc).isoformat(),
    }
    fc_path = out / "forecast.json"
    fc_path.write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
    write_manifest(out, "forecast", text, config.seed, {"forecast": str(fc_path)})
    print(f"wrote 24-hour forecast to {fc_path}")
    return 0


def _save_run_artifacts(out: Path, result, config) -> dict[str, str]:
    artifacts = {}
    metrics_path = out / "metrics.csv"
    metrics_path.write_text(metrics_csv_text(result.metrics), encoding="utf-8")
    artifacts["metrics"] = str(metrics_path)
    if result.lsa_agent is not None:
        p = out / "agent_lsa.json"
        save_agent(result.lsa_agent, result.lsa_normalizer, p)
        artifacts["agent_lsa"] = str(p)
    for i, (agent, norm) in enumerate(zip(result.pa_agents, result.pa_normalizers)):
        p = out / f"agent_pa{i}.json"
        save_agent(agent, norm, p)
        artifacts[f"agent_pa{i}"] = str(p)
    if result.forecaster is not None:
        p = out / "forecaster.json"
        save_forecaster(result.forecaster, p, result.forecaster_metrics)
        artifacts["forecaster"] = str(p)
    log_path = out / "episode_final.json"
    log_path.write_text(result.episode_logs[-1].to_json(), encoding="utf-8")
    artifacts["episode_final"] = str(log_path)
    return artifacts


def cmd_train_agents(args) -> int:
    config, text = _load_config_arg(args)
    out = _out_dir(args)
    policies = builtin_policies()
    if args.pricing not in policies:
        raise DataError(f"unknown pricing policy {args.pricing!r}; "
                        f"choose from {sorted(policies)}")
    policy = policies[args.pricing]
    if policy.kind == "dynamic_ddpg_uncertainty_margin":
        config = with_overrides(config, forecast_case="uncertainty_margin")
    result = run_training(config, price_schedule=policy.schedule_array())
    artifacts = _save_run_artifacts(out, result, config)
    report = report_from_result(policy.name, result)
    write_manifest(out, "train-agents", config_to_json(config), config.seed, artifacts,
                   extra={"pricing": policy.name,
                          "profit_mean": report.profit_mean, "par_mean": report.par_mean})
    print(f"trained {policy.name}: profit_mean={report.profit_mean!r} "
          f"par_mean={report.par_mean!r}")
    return 0


def cmd_evaluate(args) -> int:
    run_dir = Path(args.run)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"missing run manifest: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    config = load_config(run_dir / "config.json")
    if args.episodes:
        config = with_overrides(config, episodes=args.episodes,
                                eval_window=min(args.episodes, config.eval_window))
    out = _out_dir(args)

    pricing = manifest.get("pricing", "dynamic_lstm")
    policy = builtin_policies()[pricing]
    schedule = policy.schedule_array()
    lsa = lsa_norm = None
    if schedule is None:
        lsa_path = run_dir / "agent_lsa.json"
        if not lsa_path.exists():
            raise DataError(f"missing checkpoint: {lsa_path}")
        lsa = DdpgAgent(make_lsa_agent_config(config), named_rng(config.seed, "lsa"))
        lsa_norm = ObservationNormalizer(lsa.config.obs_dim)
        load_agent(lsa, lsa_norm, lsa_path)
    pa_agents, pa_norms = [], []
    for i in range(len(config.prosumers)):
        path = run_dir / f"agent_pa{i}.json"
        if not path.exists():
            raise DataError(f"missing checkpoint: {path}")
        agent = DdpgAgent(make_pa_agent_config(config), named_rng(config.seed, f"pa-{i}"))
        norm = ObservationNormalizer(agent.config.obs_dim)
        load_agent(agent, norm, path)
        pa_agents.append(agent)
        pa_norms.append(norm)
    forecaster = None
    if config.forecast_case == "lstm_engine":
        fc_path = run_dir / "forecaster.json"
        if not fc_path.exists():
            raise DataError(f"missing checkpoint: {fc_path}")
        forecaster = load_forecaster(fc_path)
    result = run_training(config, price_schedule=schedule, learn=False,
                          forecaster=forecaster,
                          agents=(lsa, lsa_norm, pa_agents, pa_norms))
    eval_path = out / "eval.csv"
    eval_path.write_text(metrics_csv_text(result.metrics), encoding="utf-8")
    write_manifest(out, "evaluate", config_to_json(config), config.seed,
                   {"eval": str(eval_path)}, extra={"pricing": pricing})
    print(f"evaluated {len(result.metrics)} episodes -> {eval_path}")
    return 0


def cmd_compare(args) -> int:
    config, text = _load_config_arg(args)
    out = _out_dir(args)
    names = [s.strip() for s in args.scenarios.split(",") if s.strip()]
    policies = builtin_policies()
    unknown = [n for n in names if n not in policies]
    if unknown:
        raise DataError(f"unknown scenarios {unknown}; choose from {sorted(policies)}")
    world = build_world(config)
    forecaster, _ = (train_wind_forecaster(config, world)
                     if config.forecast_case == "lstm_engine" else (None, {}))
    reports = []
    for name in names:
        report, _result = run_baseline(policies[name], config, world=world,
                                       forecaster=forecaster)
        reports.append(report)
        print(f"{name}: profit_mean={report.profit_mean!r} par_mean={report.par_mean!r}")
    comparison = compare_scenarios(reports)
    csv_path = out / "scenarios.csv"
    csv_path.write_text(comparison_csv(comparison), encoding="utf-8")
    json_path = out / "comparison.json"
    json_path.write_text(comparison_json(comparison), encoding="utf-8")
    write_manifest(out, "compare", text, config.seed,
                   {"scenarios_csv": str(csv_path), "comparison_json": str(json_path)},
                   extra={"scenarios": names})
    print(f"wrote {csv_path}")
    return 0


def cmd_export_plots(args) -> int:
    run_dir = Path(args.run)
    out = _out_dir(args)
    from gridrl.env import EpisodeLog

    log_path = run_dir / "episode_final.json"
    metrics_path = run_dir / "metrics.csv"
    if not log_path.exists() or not metrics_path.exists():
        raise DataError(f"run directory {run_dir} lacks episode_final.json/metrics.csv")
    log = EpisodeLog.from_json(log_path.read_text())

    lines = ["interval,cs,cb,lmp_da,lmp_rt,deficiency_mw"]
    for t in range(log.steps_filled):
        deficiency = log.dispatch_mw[t] - log.l_da_mw[t]
        lines.append(",".join([str(t), _fmt(log.cs[t]), _fmt(log.cb[t]),
                               _fmt(log.lmp_da[t]), _fmt(log.lmp_rt[t]), _fmt(deficiency)]))
    (out / "price_trace.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = ["interval,prosumer,soc,action_kw,net_load_kw"]
    for i in range(log.pros_soc_after.shape[0]):
        for t in range(log.steps_filled):
            lines.append(",".join([str(t), str(i), _fmt(log.pros_soc_after[i, t]),
                                   _fmt(log.pros_action_eff[i, t]), _fmt(log.pros_e[i, t])]))
    (out / "soc_profiles.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    metrics_text = metrics_path.read_text().strip().split("\n")
    header = metrics_text[0].split(",")
    ep_i, par_i = header.index("episode"), header.index("par")
    lines = ["episode,par"]
    for row in metrics_text[1:]:
        cells = row.split(",")
        lines.append(f"{cells[ep_i]},{cells[par_i]}")
    (out / "par_by_episode.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = ["hour,forecast_mw,actual_hint_mw"]
    hours = log.steps_filled // 4 if log.steps_filled >= 4 else 0
    for h in range(min(24, hours)):
        actual = float(np.mean(log.wind_mw[h * 4:(h + 1) * 4]))
        lines.append(f"{h},{_fmt(log.wind_forecast_mw[h])},{_fmt(actual)}")
    (out / "forecast_vs_actual.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    write_manifest(out, "export-plots", json.dumps({"run": str(run_dir)}), 0,
                   {"price_trace": str(out / "price_trace.csv"),
                    "soc_profiles": str(out / "soc_profiles.csv"),
                    "par_by_episode": str(out / "par_by_episode.csv"),
                    "forecast_vs_actual": str(out / "forecast_vs_actual.csv")})
    print(f"wrote plot data to {out}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridrl",
                                     description="electricity market simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="scenario config JSON (defaults baked in)")
            p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", help="output directory (or GRIDRL_OUT_DIR)")

    p = sub.add_parser("synth-data", help="generate synthetic wind records")
    common(p)
    p.set_defaults(fn=cmd_synth_data)

    p = sub.add_parser("train-lstm", help="train the wind forecasting engine")
    common(p)
    p.add_argument("--data", help="wind CSV (synthetic when omitted)")
    p.set_defaults(fn=cmd_train_lstm)

    p = sub.add_parser("forecast", help="issue a day-ahead forecast")
    common(p)
    p.add_argument("--model", required=True, help="forecaster checkpoint")
    p.add_argument("--data", help="wind CSV (synthetic when omitted)")
    p.set_defaults(fn=cmd_forecast)

    p = sub.add_parser("train-agents", help="train pricing/battery agents")
    common(p)
    p.add_argument("--pricing", default="dynamic_lstm",
                   help="fixed | tou_a | tou_b | dynamic_margin | dynamic_lstm")
    p.add_argument("--episodes", type=int, help="override episode count")
    p.set_defaults(fn=cmd_train_agents)

    p = sub.add_parser("evaluate", help="roll saved agents without learning")
    p.add_argument("--run", required=True, help="training run directory")
    p.add_argument("--episodes", type=int, help="evaluation episode count")
    p.add_argument("--out", help="output directory (or GRIDRL_OUT_DIR)")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("compare", help="run and rank pricing scenarios")
    common(p)
    p.add_argument("--scenarios", required=True,
                   help="comma list, e.g. fixed,tou_a,dynamic_lstm")
    p.add_argument("--episodes", type=int, help="override episode count")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("export-plots", help="emit tidy CSVs for plotting")
    p.add_argument("--run", required=True, help="training run directory")
    p.add_argument("--out", help="output directory (or GRIDRL_OUT_DIR)")
    p.set_defaults(fn=cmd_export_plots)
    return parser


def run_command(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    try:
        return args.fn(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))
