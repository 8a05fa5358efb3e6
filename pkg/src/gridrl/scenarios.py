"""Baseline pricing policies, scenario comparison, and the two-case study.

Baselines roll the same environment with a fixed or time-of-use price
schedule while the prosumer agents still train against it; the dynamic
scenarios train the pricing agent jointly. All scenarios under one master
seed consume identical exogenous streams, so differences are attributable
to the pricing policy alone.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from gridrl.config import ScenarioConfig, with_overrides
from gridrl.env import TrainResult, WorldData, build_world, run_training, train_wind_forecaster
from gridrl.errors import DataError
from gridrl.forecast import ForecasterModel

PRICE_FLOOR = 0.05
PRICE_CAP = 0.20

POLICY_KINDS = ("fixed", "tou", "dynamic_ddpg", "dynamic_ddpg_uncertainty_margin")


@dataclass(frozen=True)
class PricingPolicy:
    kind: str
    name: str
    schedule: tuple[float, ...] | None = None  # per-step $/kWh, period 96

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise DataError(f"unknown policy kind {self.kind!r}")
        if self.kind in ("fixed", "tou"):
            if self.schedule is None or len(self.schedule) != 96:
                raise DataError(f"{self.name}: schedule must cover 96 steps")
            if any(not (PRICE_FLOOR <= p <= PRICE_CAP) for p in self.schedule):
                raise DataError(f"{self.name}: schedule prices outside the retail band")

    def schedule_array(self) -> np.ndarray | None:
        return None if self.schedule is None else np.array(self.schedule, dtype=float)


def _block_schedule(blocks: list[tuple[float, float, float]], default: float) -> tuple[float, ...]:
    """blocks: (start_hour, end_hour, price); end exclusive."""
    steps = np.full(96, default, dtype=float)
    hours = np.arange(96) * 0.25
    for start, end, price in blocks:
        steps[(hours >= start) & (hours < end)] = price
    return tuple(steps)


def tou_a_policy() -> PricingPolicy:
    """Stand-in Kansas-style time-of-use: flat off-peak, 16:00-20:00 peak."""
    return PricingPolicy("tou", "tou_a",
                         _block_schedule([(16.0, 20.0, 0.16)], default=0.08))


def tou_b_policy() -> PricingPolicy:
    """Stand-in California-style time-of-use with a shoulder block."""
    schedule = _block_schedule([(12.0, 16.0, 0.13), (16.0, 21.0, 0.19)], default=0.07)
    return PricingPolicy("tou", "tou_b", schedule)


def fixed_policy() -> PricingPolicy:
    """Flat price at the time-average of the tou_a schedule."""
    avg = float(np.mean(tou_a_policy().schedule))
    return PricingPolicy("fixed", "fixed", tuple([avg] * 96))


def dynamic_policy(case: str = "lstm_engine") -> PricingPolicy:
    kind = "dynamic_ddpg" if case == "lstm_engine" else "dynamic_ddpg_uncertainty_margin"
    name = "dynamic_lstm" if case == "lstm_engine" else "dynamic_margin"
    return PricingPolicy(kind, name)


def builtin_policies() -> dict[str, PricingPolicy]:
    return {p.name: p for p in (fixed_policy(), tou_a_policy(), tou_b_policy(),
                                dynamic_policy("lstm_engine"),
                                dynamic_policy("uncertainty_margin"))}


@dataclass
class ScenarioReport:
    scenario: str
    profit_mean: float
    profit_std: float
    par_mean: float
    bill_mean: float
    days: int
    mean_abs_lmp_gap: float
    seed: int
    extra: dict = field(default_factory=dict)


def report_from_result(name: str, result: TrainResult, days: int | None = None) -> ScenarioReport:
    cfg = result.config
    days = min(days or cfg.eval_window, len(result.metrics))
    profit = result.metric_series("lse_profit")[-days:]
    par = result.metric_series("par")[-days:]
    bills = result.metric_series("mean_bill")[-days:]
    gap = result.metric_series("mean_abs_lmp_gap")[-days:]
    return ScenarioReport(
        scenario=name,
        profit_mean=float(profit.mean()), profit_std=float(profit.std()),
        par_mean=float(par.mean()), bill_mean=float(bills.mean()),
        days=int(days), mean_abs_lmp_gap=float(gap.mean()), seed=cfg.seed,
    )


def run_baseline(policy: PricingPolicy, config: ScenarioConfig, days: int | None = None,
                 world: WorldData | None = None,
                 forecaster: ForecasterModel | None = None) -> tuple[ScenarioReport, TrainResult]:
    """Train against one pricing policy and report the final-window averages."""
    if policy.kind == "dynamic_ddpg_uncertainty_margin":
        config = with_overrides(config, forecast_case="uncertainty_margin")
        forecaster = None
    if world is None:
        world = build_world(config)
    if config.forecast_case == "lstm_engine" and forecaster is None:
        forecaster, _ = train_wind_forecaster(config, world)
    result = run_training(config, price_schedule=policy.schedule_array(),
                          world=world, forecaster=forecaster)
    return report_from_result(policy.name, result, days), result


def compare_scenarios(reports: list[ScenarioReport]) -> dict:
    """Rank by profit and attach profit ratios against every other scenario."""
    if len(reports) < 2:
        raise DataError("need at least two scenario reports to compare")
    days = {r.days for r in reports}
    if len(days) != 1:
        raise DataError("reports cover different evaluation windows")
    ranked = sorted(reports, key=lambda r: (-r.profit_mean, r.scenario))
    rows = []
    for r in ranked:
        ratios = {
            f"profit_vs_{other.scenario}": (r.profit_mean / other.profit_mean
                                            if other.profit_mean else float("nan"))
            for other in reports if other.scenario != r.scenario
        }
        rows.append({
            "scenario": r.scenario, "profit_mean": r.profit_mean,
            "profit_std": r.profit_std, "par_mean": r.par_mean,
            "bill_mean": r.bill_mean, "days": r.days, **ratios,
        })
    return {"ranking": [r.scenario for r in ranked], "rows": rows}


def comparison_csv(comparison: dict) -> str:
    buf = io.StringIO()
    cols = ["scenario", "profit_mean", "profit_std", "par_mean", "bill_mean", "days"]
    buf.write(",".join(cols) + "\n")
    for row in comparison["rows"]:
        buf.write(",".join(
            row["scenario"] if c == "scenario" else repr(row[c]) if isinstance(row[c], float)
            else str(row[c]) for c in cols) + "\n")
    return buf.getvalue()


def comparison_json(comparison: dict) -> str:
    return json.dumps(comparison, indent=2, sort_keys=True)


def run_case_comparison(config: ScenarioConfig, days: int | None = None,
                        zero_actions: bool = False) -> dict:
    """Persistence-band versus forecasting-engine study on identical streams.

    Reports per-case day-ahead/real-time price mismatch, PAR, and profit.
    With zero_actions=True both cases roll a fixed mid-band price and idle
    batteries, isolating the forecast channel from agent learning.
    """
    schedule = np.full(config.steps_per_day, 0.5 * (config.price_min + config.price_max)) \
        if zero_actions else None
    cases = {}
    for case in ("uncertainty_margin", "lstm_engine"):
        cfg = with_overrides(config, forecast_case=case)
        world = build_world(cfg)
        forecaster = None
        if case == "lstm_engine":
            forecaster, _ = train_wind_forecaster(cfg, world)
        if zero_actions:
            result = run_training(cfg, price_schedule=schedule, learn=False,
                                  zero_pa_actions=True, world=world, forecaster=forecaster)
        else:
            policy = dynamic_policy(case)
            _, result = run_baseline(policy, cfg, days, world=world, forecaster=forecaster)
        report = report_from_result(case, result, days)
        cases[case] = {
            "report": report,
            "mean_abs_lmp_gap": report.mean_abs_lmp_gap,
            "per_episode_gap": result.metric_series("mean_abs_lmp_gap")[-report.days:].tolist(),
        }
    return {
        "uncertainty_margin": cases["uncertainty_margin"],
        "lstm_engine": cases["lstm_engine"],
        "gap_ratio": (cases["uncertainty_margin"]["mean_abs_lmp_gap"]
                      / max(cases["lstm_engine"]["mean_abs_lmp_gap"], 1e-12)),
    }
