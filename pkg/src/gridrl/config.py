"""Scenario configuration: one JSON document, explicit defaults, named seeds.

Every random draw in a run flows from the master seed through named
substreams, so scenarios compared under one seed see bitwise-identical
exogenous realizations (demand jitter, PV weather, wind, day-ahead bid
noise) regardless of what the agents do.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime

import numpy as np

from gridrl.data import DemandModelSpec, PvModelSpec, SyntheticProfileSpec, WindModelSpec
from gridrl.errors import DataError
from gridrl.market import GeneratorSpec, WindPlantSpec
from gridrl.retail import BatterySpec

CONFIG_SCHEMA_VERSION = 1


def named_rng(master_seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named substream of the master seed."""
    return np.random.default_rng([int(master_seed), zlib.crc32(name.encode("utf-8"))])


@dataclass(frozen=True)
class AgentHyperparams:
    batch_size: int = 64
    gamma: float = 0.95
    tau: float = 0.005
    hidden_sizes: tuple[int, ...] = (1000, 1000, 500)
    actor_activations: tuple[str, ...] = ("leaky-relu", "leaky-relu", "leaky-relu", "tanh")
    critic_activations: tuple[str, ...] = ("relu", "relu", "relu", "linear")
    actor_optimizer: str = "sgd_momentum"
    actor_lr: float = 5e-4
    actor_momentum: float = 0.8
    critic_optimizer: str = "adamw"
    critic_lr: float = 5e-3
    critic_weight_decay: float = 0.01
    noise_std: float = 0.7
    noise_floor: float = 0.05
    noise_decay_fraction: float = 0.8
    buffer_capacity: int = 1_000_000
    warmup_factor: int = 10  # updates start at warmup_factor * batch_size samples
    grad_clip: float = 10.0
    batch_norm: bool = True
    reward_scale: float = 1.0


def pa_hyperparams_default() -> AgentHyperparams:
    return AgentHyperparams()


def lsa_hyperparams_default() -> AgentHyperparams:
    return AgentHyperparams(
        batch_size=100,
        actor_activations=("rrelu", "rrelu", "rrelu", "sigmoid"),
        actor_lr=3e-5,
        actor_momentum=0.9,
        critic_lr=3e-4,
        noise_std=0.07,
        reward_scale=10.0,
    )


@dataclass(frozen=True)
class ProsumerConfig:
    name: str = "prosumer"
    battery: BatterySpec = field(default_factory=BatterySpec)
    demand: DemandModelSpec = field(default_factory=DemandModelSpec)
    pv: PvModelSpec = field(default_factory=PvModelSpec)
    cohort_size: int = 1  # identical households this agent stands for


@dataclass(frozen=True)
class ConsumerBusConfig:
    name: str = "bus"
    n_households: int = 1
    demand: DemandModelSpec = field(default_factory=DemandModelSpec)


@dataclass(frozen=True)
class ForecastSettings:
    hidden_sizes: tuple[int, ...] = (100, 100)
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 0.001
    train_days: int = 60
    window_len: int = 24
    horizon: int = 24
    grad_clip: float = 5.0


@dataclass(frozen=True)
class ScenarioConfig:
    schema_version: int = CONFIG_SCHEMA_VERSION
    seed: int = 0
    episodes: int = 4000
    eval_window: int = 100          # final episodes averaged for reports
    steps_per_day: int = 96
    dt_hours: float = 0.25
    price_min: float = 0.05
    price_max: float = 0.20
    net_metering: bool = True
    forecast_case: str = "lstm_engine"  # or "uncertainty_margin"
    uncertainty_margin: float = 0.10
    da_load_noise_frac: float = 0.05
    price_history_len: int = 20     # PA looks back this many steps (plus current)
    lmp_history_len: int = 24       # LSA LMP lookback (plus current)
    pa_reward_scale: float = 1.0
    lsa_reward_scale: float = 10.0
    infeasible_penalty: float = -10.0
    checkpoint_every: int = 0       # episodes; 0 disables periodic checkpoints
    generators: tuple[GeneratorSpec, ...] = (
        GeneratorSpec("G1", (100.0, 10.0, 0.2), 0.0, 15.0),
        GeneratorSpec("G2", (200.0, 15.0, 0.35), 0.0, 100.0),
    )
    wind_plant: WindPlantSpec = field(default_factory=WindPlantSpec)
    wind_source: str = "synthetic"  # or a CSV path
    profile: SyntheticProfileSpec = field(default_factory=SyntheticProfileSpec)
    prosumers: tuple[ProsumerConfig, ...] = tuple(
        ProsumerConfig(name=f"prosumer{i}") for i in range(3)
    )
    consumer_buses: tuple[ConsumerBusConfig, ...] = (
        ConsumerBusConfig(name="busB"),
        ConsumerBusConfig(name="busC"),
    )
    pa: AgentHyperparams = field(default_factory=pa_hyperparams_default)
    lsa: AgentHyperparams = field(default_factory=lsa_hyperparams_default)
    forecaster: ForecastSettings = field(default_factory=ForecastSettings)


def default_config(seed: int = 0) -> ScenarioConfig:
    """Full-scale setup matching the published parameter table."""
    return ScenarioConfig(seed=seed)


def desk_preset(seed: int = 0) -> ScenarioConfig:
    """Desk-scale preset: small networks, 200 episodes, MW-scale buses.

    Consumer buses aggregate thousands of homes and each prosumer agent
    stands for a cohort of identical households, so retail behavior moves
    wholesale quantities that are visible against the 50 MW wind plant.
    """
    pa = AgentHyperparams(
        batch_size=64,
        gamma=0.99,
        hidden_sizes=(32, 32, 16),
        actor_activations=("leaky-relu", "leaky-relu", "leaky-relu", "tanh"),
        actor_optimizer="sgd_momentum",
        actor_lr=1e-3,
        actor_momentum=0.8,
        critic_lr=1e-3,
        noise_std=0.7,
        noise_floor=0.01,
        noise_decay_fraction=0.6,
        buffer_capacity=40_000,
        reward_scale=0.05,
    )
    lsa = AgentHyperparams(
        batch_size=100,
        hidden_sizes=(32, 32, 16),
        actor_activations=("rrelu", "rrelu", "rrelu", "sigmoid"),
        actor_optimizer="adam",
        actor_lr=5e-4,
        critic_lr=1e-3,
        noise_std=0.05,
        noise_floor=0.02,
        noise_decay_fraction=0.6,
        buffer_capacity=40_000,
        reward_scale=500.0,
    )
    battery = BatterySpec(soc0=0.5, charge_efficiency=0.90, discharge_efficiency=0.90)
    prosumers = tuple(
        ProsumerConfig(name=f"prosumer{i}", cohort_size=2500, battery=battery)
        for i in range(3)
    )
    buses = (
        ConsumerBusConfig(name="busB", n_households=1500),
        ConsumerBusConfig(name="busC", n_households=1500),
    )
    forecaster = ForecastSettings(hidden_sizes=(16, 16), epochs=25,
                                  learning_rate=0.005, train_days=45)
    return ScenarioConfig(
        seed=seed,
        episodes=200,
        eval_window=50,
        prosumers=prosumers,
        consumer_buses=buses,
        pa=pa,
        lsa=lsa,
        forecaster=forecaster,
    )


# ---------------------------------------------------------------------------
# JSON round trip


def config_to_dict(config: ScenarioConfig) -> dict:
    return asdict(config)


def config_to_json(config: ScenarioConfig) -> str:
    def encode(obj):
        if isinstance(obj, datetime):
            return obj.isoformat()
        raise TypeError(f"cannot serialize {type(obj).__name__}")

    return json.dumps(config_to_dict(config), indent=2, sort_keys=True, default=encode)


def _tup(value, cast=None):
    if value is None:
        return None
    return tuple(cast(v) if cast else v for v in value)


def config_from_dict(doc: dict) -> ScenarioConfig:
    version = doc.get("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise DataError(f"unsupported config schema version {version}")

    def agent(d):
        d = dict(d)
        d["hidden_sizes"] = _tup(d["hidden_sizes"], int)
        d["actor_activations"] = _tup(d["actor_activations"], str)
        d["critic_activations"] = _tup(d["critic_activations"], str)
        return AgentHyperparams(**d)

    def wind_model(d):
        d = dict(d)
        d["regime_levels"] = _tup(d["regime_levels"], float)
        return WindModelSpec(**d)

    def profile(d):
        d = dict(d)
        start = d.pop("start")
        if isinstance(start, str):
            start = datetime.fromisoformat(start)
        return SyntheticProfileSpec(
            days=d["days"], start=start, cadence_minutes=d["cadence_minutes"],
            wind=wind_model(d["wind"]), demand=DemandModelSpec(**d["demand"]),
            pv=PvModelSpec(**d["pv"]), p_sunny=d["p_sunny"],
        )

    gens = tuple(
        GeneratorSpec(g["name"], tuple(g["cost_coeffs"]), g["p_min"], g["p_max"],
                      g.get("ramp_down"), g.get("ramp_up"))
        for g in doc["generators"]
    )
    prosumers = tuple(
        ProsumerConfig(
            name=p["name"], battery=BatterySpec(**p["battery"]),
            demand=DemandModelSpec(**p["demand"]), pv=PvModelSpec(**p["pv"]),
            cohort_size=p["cohort_size"],
        )
        for p in doc["prosumers"]
    )
    buses = tuple(
        ConsumerBusConfig(name=b["name"], n_households=b["n_households"],
                          demand=DemandModelSpec(**b["demand"]))
        for b in doc["consumer_buses"]
    )
    fc = dict(doc["forecaster"])
    fc["hidden_sizes"] = _tup(fc["hidden_sizes"], int)
    return ScenarioConfig(
        schema_version=version,
        seed=doc["seed"], episodes=doc["episodes"], eval_window=doc["eval_window"],
        steps_per_day=doc["steps_per_day"], dt_hours=doc["dt_hours"],
        price_min=doc["price_min"], price_max=doc["price_max"],
        net_metering=doc["net_metering"], forecast_case=doc["forecast_case"],
        uncertainty_margin=doc["uncertainty_margin"],
        da_load_noise_frac=doc["da_load_noise_frac"],
        price_history_len=doc["price_history_len"], lmp_history_len=doc["lmp_history_len"],
        pa_reward_scale=doc["pa_reward_scale"], lsa_reward_scale=doc["lsa_reward_scale"],
        infeasible_penalty=doc["infeasible_penalty"],
        checkpoint_every=doc["checkpoint_every"],
        generators=gens,
        wind_plant=WindPlantSpec(**doc["wind_plant"]),
        wind_source=doc["wind_source"],
        profile=profile(doc["profile"]),
        prosumers=prosumers, consumer_buses=buses,
        pa=agent(doc["pa"]), lsa=agent(doc["lsa"]),
        forecaster=ForecastSettings(**fc),
    )


def config_from_json(text: str) -> ScenarioConfig:
    return config_from_dict(json.loads(text))


def load_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_json(fh.read())


def save_config(config: ScenarioConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config_to_json(config))


def with_overrides(config: ScenarioConfig, **kwargs) -> ScenarioConfig:
    return replace(config, **kwargs)
