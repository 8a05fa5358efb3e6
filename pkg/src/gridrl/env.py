"""Multi-agent retail/wholesale market environment and the training pipeline.

One episode is a 24-hour day at 15-minute resolution (96 steps). Within a
step the order of effects is fixed: the pricing agent broadcasts the retail
prices, each prosumer agent moves its battery, net loads aggregate, the
real-time market clears the aggregate against the realized wind, and rewards
settle. Day-ahead clearing runs once per episode at reset, using the wind
forecast (recurrent engine or persistence band) and a day-ahead load bid
formed from the previous day's realized load plus noise.

Agents see raw observation vectors built here; the training loop standardizes
them with streaming per-feature statistics before they reach the networks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from gridrl.config import ScenarioConfig, named_rng
from gridrl.data import (
    daily_regime_factors,
    draw_weather_labels,
    household_demand_curve,
    pv_curve,
    synthesize_wind,
)
from gridrl.ddpg import AgentConfig, DdpgAgent, Transition
from gridrl.errors import DataError, StateError
from gridrl.forecast import (
    ForecasterConfig,
    ForecasterModel,
    WindRecord,
    eval_metrics,
    impute_missing,
    make_windows,
    predict_day_ahead,
    resample_hourly,
    train_forecaster,
    uncertainty_band_forecast,
)
from gridrl.market import clear_day_ahead, economic_dispatch
from gridrl.retail import (
    PriceSignal,
    battery_step,
    bill_increment,
    lse_total_cost,
    peak_to_average,
    prosumer_net_load,
    settle_interval,
)

KW_PER_MW = 1000.0


# ---------------------------------------------------------------------------
# observation plumbing


class ObservationNormalizer:
    """Streaming per-feature standardization (population variance).

    Identity before the first update; afterwards (x - mean)/sqrt(var + floor).
    Statistics move only when `update=True` (training mode).
    """

    def __init__(self, dim: int, floor: float = 1e-6):
        self.dim = dim
        self.floor = floor
        self.count = 0
        self.mean = np.zeros(dim)
        self._m2 = np.zeros(dim)

    @property
    def variance(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros(self.dim)
        return self._m2 / self.count

    def normalize(self, obs: np.ndarray, update: bool = False) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape != (self.dim,):
            raise DataError(f"expected observation of dim {self.dim}, got {obs.shape}")
        if self.count == 0:
            out = obs.copy()
        else:
            out = (obs - self.mean) / np.sqrt(self.variance + self.floor)
        if update:
            self.count += 1
            delta = obs - self.mean
            self.mean = self.mean + delta / self.count
            self._m2 = self._m2 + delta * (obs - self.mean)
        return out

    def state_dict(self) -> dict:
        return {"count": self.count, "mean": self.mean.tolist(), "m2": self._m2.tolist()}

    def load_state(self, d: dict) -> None:
        self.count = int(d["count"])
        self.mean = np.array(d["mean"], dtype=np.float64)
        self._m2 = np.array(d["m2"], dtype=np.float64)


class PaddedHistory:
    """Fixed-length trailing window padded at the front with the first value."""

    def __init__(self, length: int):
        self.length = length
        self.values: list[float] = []

    def push(self, value: float) -> None:
        self.values.append(float(value))
        if len(self.values) > self.length:
            self.values = self.values[-self.length:]

    def view(self, candidate: float | None = None) -> np.ndarray:
        vals = self.values + ([float(candidate)] if candidate is not None else [])
        vals = vals[-self.length:]
        if not vals:
            raise StateError("history is empty and no candidate was supplied")
        pad = [vals[0]] * (self.length - len(vals))
        return np.array(pad + vals, dtype=np.float64)


def pa_observation_dim(price_history_len: int) -> int:
    return 3 + 2 * (price_history_len + 1)


def lsa_observation_dim(lmp_history_len: int, horizon: int = 24) -> int:
    return horizon + 2 * (lmp_history_len + 1) + 3


def build_pa_observation(demand_kw: float, pv_kw: float, soc: float,
                         sell_history: np.ndarray, buy_history: np.ndarray) -> np.ndarray:
    """Layout: [d, g, soc, sell price history (oldest..newest), buy history]."""
    return np.concatenate([[demand_kw, pv_kw, soc], sell_history, buy_history])


def build_lsa_observation(wind_forecast_mw: np.ndarray, rho_da_history: np.ndarray,
                          rho_rt_history: np.ndarray, l_da_mw: float, l_rt_mw: float,
                          buyback_mw: float) -> np.ndarray:
    """Layout: [24h wind forecast, DA LMP history, RT LMP history, L_DA, L_RT, E]."""
    if len(wind_forecast_mw) != 24:
        raise DataError(f"wind forecast must hold 24 hourly values, got {len(wind_forecast_mw)}")
    return np.concatenate([
        wind_forecast_mw, rho_da_history, rho_rt_history, [l_da_mw, l_rt_mw, buyback_mw],
    ])


# ---------------------------------------------------------------------------
# rewards


def pa_reward(net_load_kw: float, price: PriceSignal, dt: float, scale: float = 1.0) -> float:
    """Negated bill: minimizing the bill is maximizing this."""
    return -bill_increment(net_load_kw, price, dt) / scale


def lsa_reward(aggregate_load_kw: float, sell_price: float, seller_energy_kw: float,
               buy_price: float, conventional_mw: float, wind_mw: float,
               rt_price_per_mwh: float, dt: float, scale: float = 1.0) -> float:
    """Retail take minus prosumer buyback minus wholesale procurement, per step."""
    retail = aggregate_load_kw * sell_price * dt
    buyback = seller_energy_kw * buy_price * dt
    procurement = (conventional_mw + wind_mw) * rt_price_per_mwh * dt
    return (retail - buyback - procurement) / scale


# ---------------------------------------------------------------------------
# exogenous data for a whole run


@dataclass
class EpisodeExogenous:
    consumer_bus_kw: np.ndarray      # [n_bus, steps]
    prosumer_demand_kw: np.ndarray   # [n_prosumer, steps]
    prosumer_pv_kw: np.ndarray       # [n_prosumer, steps]
    wind_actual_hourly_mw: np.ndarray  # [24]
    da_noise: np.ndarray             # [steps] multiplicative factors
    sunny: bool


@dataclass
class WorldData:
    """Everything exogenous, derived from the master seed before training."""

    config: ScenarioConfig
    hourly_records: list[WindRecord]     # imputed hourly series, train + episodes
    train_records: list[WindRecord]
    episodes: list[EpisodeExogenous]
    history_records: list[list[WindRecord]]  # per episode: previous day's 24 records
    baseline_load_mw: np.ndarray         # zero-action expected load, episode 0 DA basis
    regime_factors: np.ndarray           # per-day wind amplitude factors, whole horizon

    @property
    def steps(self) -> int:
        return self.config.steps_per_day

    def episode_day(self, episode: int) -> int:
        return self.config.forecaster.train_days + 1 + episode


def build_world(config: ScenarioConfig) -> WorldData:
    fc = config.forecaster
    total_days = fc.train_days + config.episodes + 1
    profile = replace(config.profile, days=total_days)
    regime_rng = named_rng(config.seed, "wind-regime")
    factors = daily_regime_factors(profile.wind, total_days, regime_rng)
    if config.wind_source == "synthetic":
        wind_seed = int(named_rng(config.seed, "wind-data").integers(0, 2**31 - 1))
        records = synthesize_wind(profile, wind_seed, regime_factors=factors)
    else:
        from gridrl.data import load_wind_csv

        records = load_wind_csv(config.wind_source, scale_to_p_max=config.wind_plant.p_max)
    hourly = impute_missing(resample_hourly(records), k=5)
    if len(hourly) < total_days * 24:
        raise DataError(
            f"wind source covers {len(hourly)} hours, need {total_days * 24} "
            f"({fc.train_days} training days + {config.episodes} episodes + 1)"
        )
    hourly = hourly[: total_days * 24]

    train_records = hourly[: fc.train_days * 24]

    weather = draw_weather_labels(
        config.profile.p_sunny, config.episodes, named_rng(config.seed, "weather"))
    da_noise_rng = named_rng(config.seed, "da-noise")
    demand_rng = named_rng(config.seed, "demand-jitter")

    steps = config.steps_per_day
    episodes = []
    history_records = []
    for e in range(config.episodes):
        day = fc.train_days + 1 + e
        day_hours = hourly[day * 24:(day + 1) * 24]
        wind_actual = np.array([r.active_power for r in day_hours])
        history_records.append(hourly[(day - 1) * 24: day * 24])

        buses = []
        for bus in config.consumer_buses:
            spec = replace(bus.demand,
                           jitter_frac=bus.demand.jitter_frac / np.sqrt(max(1, bus.n_households)))
            buses.append(bus.n_households * household_demand_curve(spec, demand_rng, steps))
        pros_d = np.stack([
            household_demand_curve(p.demand, demand_rng, steps) for p in config.prosumers
        ]) if config.prosumers else np.zeros((0, steps))
        sunny = bool(weather[e])
        pros_pv = np.stack([
            pv_curve(p.pv, sunny, demand_rng, steps) for p in config.prosumers
        ]) if config.prosumers else np.zeros((0, steps))
        episodes.append(EpisodeExogenous(
            consumer_bus_kw=np.stack(buses) if buses else np.zeros((0, steps)),
            prosumer_demand_kw=pros_d,
            prosumer_pv_kw=pros_pv,
            wind_actual_hourly_mw=wind_actual,
            da_noise=1.0 + config.da_load_noise_frac * da_noise_rng.standard_normal(steps),
            sunny=sunny,
        ))

    first = episodes[0]
    baseline_kw = first.consumer_bus_kw.sum(axis=0)
    for i in range(len(config.prosumers)):
        cohort = config.prosumers[i].cohort_size
        baseline_kw = baseline_kw + cohort * (first.prosumer_demand_kw[i] - first.prosumer_pv_kw[i])
    return WorldData(
        config=config, hourly_records=hourly, train_records=train_records,
        episodes=episodes, history_records=history_records,
        baseline_load_mw=np.maximum(baseline_kw, 0.0) / KW_PER_MW,
        regime_factors=factors,
    )


def train_wind_forecaster(config: ScenarioConfig, world: WorldData) -> tuple[ForecasterModel, dict]:
    """Phase one: fit the recurrent engine on the historical slice."""
    fc = config.forecaster
    train, test = make_windows(world.train_records, fc.window_len, fc.horizon, 0.8)
    model = train_forecaster(train, ForecasterConfig(
        hidden_sizes=fc.hidden_sizes, epochs=fc.epochs, batch_size=fc.batch_size,
        learning_rate=fc.learning_rate, seed=int(named_rng(config.seed, "lstm").integers(2**31)),
        wp_max=config.wind_plant.p_max, grad_clip=fc.grad_clip,
    ))
    metrics = eval_metrics(model.predict(test.inputs), test.targets) if len(test) else {}
    return model, metrics


def day_ahead_wind_forecasts(config: ScenarioConfig, world: WorldData,
                             model: ForecasterModel | None) -> np.ndarray:
    """Per-episode 24-hour DA wind: engine prediction or persistence band point."""
    out = np.zeros((config.episodes, 24))
    for e in range(config.episodes):
        history = world.history_records[e]
        if model is not None:
            out[e] = predict_day_ahead(model, history)
        else:
            prev_power = np.array([r.active_power for r in history])
            point, _, _ = uncertainty_band_forecast(prev_power, config.uncertainty_margin)
            out[e] = np.clip(point, 0.0, config.wind_plant.p_max)
    return out


# ---------------------------------------------------------------------------
# episode log


@dataclass
class EpisodeLog:
    episode: int
    sunny: bool
    wind_forecast_mw: np.ndarray          # [24]
    cs: np.ndarray                        # [steps]
    cb: np.ndarray
    lmp_da: np.ndarray
    lmp_rt: np.ndarray
    l_da_mw: np.ndarray
    l_d_kw: np.ndarray                    # aggregate retail load (may be negative)
    dispatch_mw: np.ndarray               # cleared demand, >= 0
    wind_mw: np.ndarray                   # dispatched wind
    conventional_mw: np.ndarray           # total gas output
    gen_outputs: dict[str, np.ndarray]
    revenue: np.ndarray                   # $ per step, buyers
    buyback_cost: np.ndarray              # $ per step, sellers
    seller_kw: np.ndarray
    surplus_mw: np.ndarray
    lsa_reward_arr: np.ndarray
    infeasible: np.ndarray                # bool flags
    negative_load: np.ndarray
    pros_demand: np.ndarray               # [n_prosumers, steps]
    pros_pv: np.ndarray
    pros_soc_before: np.ndarray
    pros_soc_after: np.ndarray
    pros_action_req: np.ndarray
    pros_action_eff: np.ndarray
    pros_e: np.ndarray
    pros_bill: np.ndarray
    pros_reward: np.ndarray
    steps_filled: int = 0

    @classmethod
    def empty(cls, episode: int, sunny: bool, forecast: np.ndarray,
              n_prosumers: int, steps: int, gen_names: list[str]) -> "EpisodeLog":
        z = lambda: np.zeros(steps)
        zp = lambda: np.zeros((n_prosumers, steps))
        return cls(
            episode=episode, sunny=sunny, wind_forecast_mw=np.asarray(forecast, dtype=float),
            cs=z(), cb=z(), lmp_da=z(), lmp_rt=z(), l_da_mw=z(), l_d_kw=z(),
            dispatch_mw=z(), wind_mw=z(), conventional_mw=z(),
            gen_outputs={name: z() for name in gen_names},
            revenue=z(), buyback_cost=z(), seller_kw=z(), surplus_mw=z(),
            lsa_reward_arr=z(), infeasible=np.zeros(steps, dtype=bool),
            negative_load=np.zeros(steps, dtype=bool),
            pros_demand=zp(), pros_pv=zp(), pros_soc_before=zp(), pros_soc_after=zp(),
            pros_action_req=zp(), pros_action_eff=zp(), pros_e=zp(),
            pros_bill=zp(), pros_reward=zp(),
        )

    def par(self) -> float | None:
        n = self.steps_filled
        return peak_to_average(self.l_d_kw[:n]) if n else None

    def lse_profit_dollars(self, dt: float) -> float:
        n = self.steps_filled
        tc = lse_total_cost(self.l_da_mw[:n], self.lmp_da[:n], self.dispatch_mw[:n],
                            self.lmp_rt[:n], self.buyback_cost[:n], dt)
        surplus_credit = float(np.sum(self.surplus_mw[:n] * self.lmp_rt[:n]) * dt)
        retail_sales = float(np.sum(self.revenue[:n]))
        return retail_sales - tc + surplus_credit

    def prosumer_bills(self) -> np.ndarray:
        return self.pros_bill[:, : self.steps_filled].sum(axis=1)

    def to_json(self) -> str:
        doc = {}
        for name, value in self.__dict__.items():
            if isinstance(value, np.ndarray):
                doc[name] = value.tolist()
            elif isinstance(value, dict):
                doc[name] = {k: v.tolist() for k, v in value.items()}
            else:
                doc[name] = value
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EpisodeLog":
        doc = json.loads(text)
        kwargs = {}
        for name, value in doc.items():
            if name == "gen_outputs":
                kwargs[name] = {k: np.array(v, dtype=float) for k, v in value.items()}
            elif isinstance(value, list):
                arr = np.array(value)
                if name in ("infeasible", "negative_load"):
                    arr = arr.astype(bool)
                kwargs[name] = arr
            else:
                kwargs[name] = value
        return cls(**kwargs)

    def ledger_rows(self) -> list[dict]:
        """Ledger CSV schema: one row per interval and prosumer."""
        rows = []
        for t in range(self.steps_filled):
            lse_cost = (self.l_da_mw[t] * self.lmp_da[t]
                        + (self.dispatch_mw[t] - self.l_da_mw[t]) * self.lmp_rt[t])
            for i in range(self.pros_bill.shape[0]):
                rows.append({
                    "interval": t,
                    "L_D": self.l_d_kw[t],
                    "C_s": self.cs[t],
                    "C_b": self.cb[t],
                    "lse_revenue": self.revenue[t],
                    "lse_cost": lse_cost,
                    "prosumer_id": i,
                    "bill": self.pros_bill[i, t],
                })
        return rows


def pa_observations_from_log(log: EpisodeLog, prosumer: int, price_history_len: int) -> list[np.ndarray]:
    """Rebuild the exact per-step prosumer observations from a parsed log."""
    sell = PaddedHistory(price_history_len + 1)
    buy = PaddedHistory(price_history_len + 1)
    out = []
    for t in range(log.steps_filled):
        sell_view = sell.view(candidate=log.cs[t])
        buy_view = buy.view(candidate=log.cb[t])
        out.append(build_pa_observation(
            log.pros_demand[prosumer, t], log.pros_pv[prosumer, t],
            log.pros_soc_before[prosumer, t], sell_view, buy_view))
        sell.push(log.cs[t])
        buy.push(log.cb[t])
    return out


def lsa_observations_from_log(log: EpisodeLog, lmp_history_len: int) -> list[np.ndarray]:
    """Rebuild the exact per-step pricing-agent observations from a parsed log."""
    rt_hist = PaddedHistory(lmp_history_len + 1)
    rt_hist.push(log.lmp_da[0])
    out = []
    l_rt = log.l_da_mw[0]
    buyback_mw = 0.0
    for t in range(log.steps_filled):
        lo = max(0, t - lmp_history_len)
        da_vals = log.lmp_da[lo:t + 1]
        da_view = np.concatenate([np.full(lmp_history_len + 1 - len(da_vals), da_vals[0]), da_vals])
        out.append(build_lsa_observation(
            log.wind_forecast_mw, da_view, rt_hist.view(),
            log.l_da_mw[t], l_rt, buyback_mw))
        rt_hist.push(log.lmp_rt[t])
        l_rt = log.l_d_kw[t] / KW_PER_MW
        buyback_mw = log.seller_kw[t] / KW_PER_MW
    return out


# ---------------------------------------------------------------------------
# the environment


@dataclass
class StepOutcome:
    lsa_obs: np.ndarray
    pa_obs: list[np.ndarray]
    lsa_reward_value: float
    pa_rewards: list[float]
    done: bool
    infeasible: bool


class MarketEnv:
    """Single-threaded market day simulator driven by precomputed exogenous data."""

    def __init__(self, config: ScenarioConfig, world: WorldData, da_forecasts: np.ndarray):
        self.config = config
        self.world = world
        self.da_forecasts = da_forecasts
        self.gen_names = [g.name for g in config.generators]
        self.n_prosumers = len(config.prosumers)
        self._episode = None
        self.log: EpisodeLog | None = None

    # -- lifecycle ---------------------------------------------------------

    def reset(self, episode: int) -> np.ndarray:
        cfg = self.config
        if not (0 <= episode < len(self.world.episodes)):
            raise DataError(f"episode {episode} outside the generated range")
        exo = self.world.episodes[episode]
        self._episode = episode
        self.exo = exo
        self.t = 0
        self.done = False
        self.soc = np.array([p.battery.soc0 for p in cfg.prosumers])
        forecast = self.da_forecasts[episode]

        # day-ahead commitment: previous realized load (or the zero-action
        # baseline for the first episode) perturbed by the bid-noise stream
        basis = self._prev_realized if self._has_prev(episode) else self.world.baseline_load_mw
        self.l_da_mw = np.maximum(basis * exo.da_noise, 0.0)
        da_wind = np.repeat(forecast, cfg.steps_per_day // 24)
        da_results = clear_day_ahead(self.l_da_mw, da_wind, list(cfg.generators), cfg.wind_plant)
        self.rho_da = np.array([r.lmp for r in da_results])

        self.sell_hist = PaddedHistory(cfg.price_history_len + 1)
        self.buy_hist = PaddedHistory(cfg.price_history_len + 1)
        self.rt_hist = PaddedHistory(cfg.lmp_history_len + 1)
        self.rt_hist.push(self.rho_da[0])
        self.l_rt_mw = self.l_da_mw[0]
        self.buyback_mw = 0.0
        self.prev_gas_outputs = None
        self.log = EpisodeLog.empty(episode, exo.sunny, forecast, self.n_prosumers,
                                    cfg.steps_per_day, self.gen_names)
        self.log.l_da_mw[:] = self.l_da_mw
        self.log.lmp_da[:] = self.rho_da
        return self._build_lsa_obs()

    def _has_prev(self, episode: int) -> bool:
        return episode > 0 and getattr(self, "_prev_realized", None) is not None

    def _da_history_view(self, t: int) -> np.ndarray:
        m = self.config.lmp_history_len
        t = min(t, self.config.steps_per_day - 1)
        lo = max(0, t - m)
        vals = self.rho_da[lo:t + 1]
        return np.concatenate([np.full(m + 1 - len(vals), vals[0]), vals])

    def _build_lsa_obs(self) -> np.ndarray:
        return build_lsa_observation(
            self.da_forecasts[self._episode], self._da_history_view(self.t),
            self.rt_hist.view(), float(self.l_da_mw[min(self.t, self.config.steps_per_day - 1)]),
            float(self.l_rt_mw), float(self.buyback_mw))

    def peek_pa_observations(self, cs: float, cb: float) -> list[np.ndarray]:
        """Prosumer observations for candidate prices, without committing them."""
        t = min(self.t, self.config.steps_per_day - 1)
        sell_view = self.sell_hist.view(candidate=cs)
        buy_view = self.buy_hist.view(candidate=cb)
        return [
            build_pa_observation(
                float(self.exo.prosumer_demand_kw[i, t]), float(self.exo.prosumer_pv_kw[i, t]),
                float(self.soc[i]), sell_view, buy_view)
            for i in range(self.n_prosumers)
        ]

    def clip_prices(self, cs: float, cb: float | None = None) -> tuple[float, float]:
        cfg = self.config
        cs = float(np.clip(cs, cfg.price_min, cfg.price_max))
        if cfg.net_metering or cb is None:
            cb = cs
        else:
            cb = float(np.clip(cb, cfg.price_min, cfg.price_max))
        return cs, cb

    def step(self, cs: float, cb: float, pa_actions) -> StepOutcome:
        """Advance one interval; pa_actions are requested battery kW (discharge > 0)."""
        if self.done:
            raise StateError("episode finished; call reset()")
        cfg = self.config
        t = self.t
        exo = self.exo
        cs, cb = self.clip_prices(cs, cb)
        price = PriceSignal(sell=cs, buy=cb, interval=t)
        self.sell_hist.push(cs)
        self.buy_hist.push(cb)

        soc_before = self.soc.copy()
        eff = np.zeros(self.n_prosumers)
        e_kw = np.zeros(self.n_prosumers)
        bills = np.zeros(self.n_prosumers)
        for i, pconf in enumerate(cfg.prosumers):
            requested = float(pa_actions[i]) if self.n_prosumers else 0.0
            b_eff, new_soc = battery_step(pconf.battery, float(self.soc[i]), requested, cfg.dt_hours)
            self.soc[i] = new_soc
            eff[i] = b_eff
            e_kw[i] = prosumer_net_load(float(exo.prosumer_demand_kw[i, t]),
                                        float(exo.prosumer_pv_kw[i, t]), b_eff)
            bills[i] = bill_increment(e_kw[i], price, cfg.dt_hours)

        bus_loads = [float(exo.consumer_bus_kw[b, t]) for b in range(exo.consumer_bus_kw.shape[0])]
        cohort_loads = [e_kw[i] * cfg.prosumers[i].cohort_size for i in range(self.n_prosumers)]
        settlement = settle_interval(bus_loads, cohort_loads, price, cfg.dt_hours)
        l_d_kw = settlement.aggregate_load_kw
        l_d_mw = l_d_kw / KW_PER_MW
        dispatch_demand = max(l_d_mw, 0.0)
        surplus_mw = max(-l_d_mw, 0.0)
        wind_now = float(exo.wind_actual_hourly_mw[t * 24 // cfg.steps_per_day])
        rt = economic_dispatch(dispatch_demand, wind_now, list(cfg.generators),
                               cfg.wind_plant, prev_outputs=self.prev_gas_outputs)
        self.prev_gas_outputs = [rt.outputs[name] for name in self.gen_names]
        conventional = sum(rt.outputs.values())

        log = self.log
        log.cs[t], log.cb[t] = cs, cb
        log.lmp_rt[t] = rt.lmp
        log.l_d_kw[t] = l_d_kw
        log.dispatch_mw[t] = dispatch_demand
        log.wind_mw[t] = rt.wind_dispatched
        log.conventional_mw[t] = conventional
        for name in self.gen_names:
            log.gen_outputs[name][t] = rt.outputs[name]
        log.revenue[t] = settlement.revenue
        log.buyback_cost[t] = settlement.buyback_cost
        log.seller_kw[t] = settlement.seller_energy_kw
        log.surplus_mw[t] = surplus_mw
        log.negative_load[t] = l_d_mw < 0
        log.pros_demand[:, t] = exo.prosumer_demand_kw[:, t] if self.n_prosumers else 0
        log.pros_pv[:, t] = exo.prosumer_pv_kw[:, t] if self.n_prosumers else 0
        log.pros_soc_before[:, t] = soc_before
        log.pros_soc_after[:, t] = self.soc
        log.pros_action_req[:, t] = np.asarray(pa_actions, dtype=float) if self.n_prosumers else 0
        log.pros_action_eff[:, t] = eff
        log.pros_e[:, t] = e_kw
        log.pros_bill[:, t] = bills

        infeasible = not rt.feasible
        if infeasible:
            pa_rewards = [cfg.infeasible_penalty] * self.n_prosumers
            lsa_r = cfg.infeasible_penalty
        else:
            pa_rewards = [pa_reward(e_kw[i], price, cfg.dt_hours, cfg.pa_reward_scale)
                          for i in range(self.n_prosumers)]
            # procurement settles on the net wholesale position: generation
            # serving the network minus any exported surplus credited back
            lsa_r = lsa_reward(l_d_kw, cs, settlement.seller_energy_kw, cb,
                               conventional - surplus_mw, rt.wind_dispatched,
                               rt.lmp, cfg.dt_hours, cfg.lsa_reward_scale)
        log.pros_reward[:, t] = pa_rewards
        log.lsa_reward_arr[t] = lsa_r
        log.infeasible[t] = infeasible
        log.steps_filled = t + 1

        self.rt_hist.push(rt.lmp)
        self.l_rt_mw = l_d_mw
        self.buyback_mw = settlement.seller_energy_kw / KW_PER_MW
        self.t += 1
        self.done = self.t >= cfg.steps_per_day or infeasible
        if self.done:
            self._prev_realized = log.dispatch_mw.copy()

        lsa_obs = self._build_lsa_obs()
        pa_obs = self.peek_pa_observations(cs, cb)
        return StepOutcome(lsa_obs=lsa_obs, pa_obs=pa_obs, lsa_reward_value=lsa_r,
                           pa_rewards=list(pa_rewards), done=self.done, infeasible=infeasible)

    def verify_step_consistency(self, t: int, tol: float = 1e-9) -> bool:
        """Power balance and ledger closure on a logged row."""
        log = self.log
        if t >= log.steps_filled:
            raise DataError(f"step {t} not logged yet")
        gen_sum = sum(log.gen_outputs[name][t] for name in self.gen_names)
        balance = abs(gen_sum + log.wind_mw[t] - log.dispatch_mw[t])
        scale = max(1.0, abs(log.dispatch_mw[t]))
        return balance <= tol * scale


# ---------------------------------------------------------------------------
# training orchestration


def _persist_checkpoints(directory, episode, lsa, lsa_norm, pa_agents, pa_norms):
    from pathlib import Path

    from gridrl.nn import save_checkpoint

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    def dump(agent, norm, name):
        stores, extra = agent.state_documents()
        extra["normalizer"] = norm.state_dict()
        extra["episode"] = episode
        save_checkpoint(directory / f"{name}_ep{episode + 1}.json", stores, extra=extra)
    if lsa is not None:
        dump(lsa, lsa_norm, "agent_lsa")
    for i, (agent, norm) in enumerate(zip(pa_agents, pa_norms)):
        dump(agent, norm, f"agent_pa{i}")


@dataclass
class TrainResult:
    config: ScenarioConfig
    metrics: list[dict]
    episode_logs: list[EpisodeLog]
    lsa_agent: DdpgAgent | None
    pa_agents: list[DdpgAgent]
    lsa_normalizer: ObservationNormalizer | None
    pa_normalizers: list[ObservationNormalizer]
    forecaster: ForecasterModel | None
    forecaster_metrics: dict
    world: WorldData
    da_forecasts: np.ndarray

    def metric_series(self, key: str) -> np.ndarray:
        return np.array([row[key] for row in self.metrics], dtype=float)


def make_pa_agent_config(config: ScenarioConfig) -> AgentConfig:
    hp = config.pa
    battery = config.prosumers[0].battery if config.prosumers else None
    low = -battery.p_charge_max_kw if battery else -1.0
    high = battery.p_discharge_max_kw if battery else 1.0
    return AgentConfig(
        obs_dim=pa_observation_dim(config.price_history_len), act_dim=1,
        act_low=(low,), act_high=(high,),
        gamma=hp.gamma, tau=hp.tau, batch_size=hp.batch_size,
        hidden_sizes=hp.hidden_sizes, actor_activations=hp.actor_activations,
        critic_activations=hp.critic_activations,
        actor_optimizer=hp.actor_optimizer, actor_lr=hp.actor_lr,
        actor_momentum=hp.actor_momentum, critic_optimizer=hp.critic_optimizer,
        critic_lr=hp.critic_lr, critic_weight_decay=hp.critic_weight_decay,
        noise_std=hp.noise_std, noise_floor=hp.noise_floor,
        noise_decay_fraction=hp.noise_decay_fraction,
        buffer_capacity=hp.buffer_capacity, warmup_factor=hp.warmup_factor,
        grad_clip=hp.grad_clip, batch_norm=hp.batch_norm,
    )


def make_lsa_agent_config(config: ScenarioConfig) -> AgentConfig:
    hp = config.lsa
    act_dim = 1 if config.net_metering else 2
    return AgentConfig(
        obs_dim=lsa_observation_dim(config.lmp_history_len), act_dim=act_dim,
        act_low=(config.price_min,) * act_dim, act_high=(config.price_max,) * act_dim,
        gamma=hp.gamma, tau=hp.tau, batch_size=hp.batch_size,
        hidden_sizes=hp.hidden_sizes, actor_activations=hp.actor_activations,
        critic_activations=hp.critic_activations,
        actor_optimizer=hp.actor_optimizer, actor_lr=hp.actor_lr,
        actor_momentum=hp.actor_momentum, critic_optimizer=hp.critic_optimizer,
        critic_lr=hp.critic_lr, critic_weight_decay=hp.critic_weight_decay,
        noise_std=hp.noise_std, noise_floor=hp.noise_floor,
        noise_decay_fraction=hp.noise_decay_fraction,
        buffer_capacity=hp.buffer_capacity, warmup_factor=hp.warmup_factor,
        grad_clip=hp.grad_clip, batch_norm=hp.batch_norm,
    )


def run_training(config: ScenarioConfig, price_schedule: np.ndarray | None = None,
                 learn: bool = True, world: WorldData | None = None,
                 forecaster: ForecasterModel | None = None,
                 zero_pa_actions: bool = False,
                 agents: tuple | None = None,
                 checkpoint_dir=None,
                 progress=None) -> TrainResult:
    """Two-phase pipeline: fit the wind engine, then roll and train the agents.

    With `price_schedule` given, the pricing side follows the fixed schedule
    and only prosumer agents train (the baseline scenarios); `learn=False`
    rolls without any parameter updates; `zero_pa_actions` idles every
    battery, isolating the exogenous dynamics. Preconstructed agents (for
    evaluating a checkpoint) pass through `agents` as
    (lsa, lsa_normalizer, pa_agents, pa_normalizers).
    """
    if world is None:
        world = build_world(config)
    fc_metrics = {}
    if config.forecast_case == "lstm_engine":
        if forecaster is None:
            forecaster, fc_metrics = train_wind_forecaster(config, world)
    elif config.forecast_case != "uncertainty_margin":
        raise DataError(f"unknown forecast_case {config.forecast_case!r}")
    da = day_ahead_wind_forecasts(config, world, forecaster)
    env = MarketEnv(config, world, da)

    if price_schedule is not None:
        price_schedule = np.asarray(price_schedule, dtype=float)
        if price_schedule.shape != (config.steps_per_day,):
            raise DataError("price schedule must cover one day of steps")
    if agents is not None:
        lsa, lsa_norm, pa_agents, pa_norms = agents
        if price_schedule is None and lsa is None:
            raise DataError("no pricing agent supplied and no schedule either")
    else:
        lsa = None
        lsa_norm = None
        if price_schedule is None:
            lsa = DdpgAgent(make_lsa_agent_config(config), named_rng(config.seed, "lsa"))
            lsa_norm = ObservationNormalizer(lsa.config.obs_dim)
        pa_agents = [DdpgAgent(make_pa_agent_config(config), named_rng(config.seed, f"pa-{i}"))
                     for i in range(len(config.prosumers))]
        pa_norms = [ObservationNormalizer(a.config.obs_dim) for a in pa_agents]

    metrics: list[dict] = []
    logs: list[EpisodeLog] = []
    for episode in range(config.episodes):
        if lsa is not None:
            lsa.set_noise_for_episode(episode, config.episodes)
        for agent in pa_agents:
            agent.set_noise_for_episode(episode, config.episodes)

        lsa_obs_raw = env.reset(episode)
        lsa_obs = lsa_norm.normalize(lsa_obs_raw, update=learn) if lsa else None
        pending_pa: list[tuple | None] = [None] * len(pa_agents)
        lsa_return = 0.0
        pa_returns = np.zeros(len(pa_agents))
        for t in range(config.steps_per_day):
            if price_schedule is not None:
                cs = cb = float(price_schedule[t])
                lsa_action = None
            else:
                noise = lsa.noise_std if learn else 0.0
                lsa_action = lsa.select_action(lsa_obs, noise_std=noise)
                cs = float(lsa_action[0])
                cb = float(lsa_action[-1])
            cs, cb = env.clip_prices(cs, cb)

            pa_obs_raw = env.peek_pa_observations(cs, cb)
            pa_obs = [norm.normalize(o, update=learn)
                      for norm, o in zip(pa_norms, pa_obs_raw)]
            if zero_pa_actions:
                pa_actions = [0.0] * len(pa_agents)
            else:
                pa_actions = []
                for agent, obs in zip(pa_agents, pa_obs):
                    noise = agent.noise_std if learn else 0.0
                    pa_actions.append(float(agent.select_action(obs, noise_std=noise)[0]))

            outcome = env.step(cs, cb, pa_actions)
            lsa_return += outcome.lsa_reward_value
            pa_returns += np.array(outcome.pa_rewards) if pa_agents else 0.0

            next_lsa_obs = None
            if lsa is not None:
                next_lsa_obs = lsa_norm.normalize(outcome.lsa_obs, update=learn)
            if learn:
                # prosumer transitions complete one step later, once the next
                # prices (and so the next observation) exist
                for i, agent in enumerate(pa_agents):
                    if pending_pa[i] is not None:
                        s, a, r = pending_pa[i]
                        agent.buffer.push(Transition(s, a, r, pa_obs[i], terminal=False))
                    pending_pa[i] = (pa_obs[i], np.array([pa_actions[i]]),
                                     outcome.pa_rewards[i])
                if lsa is not None:
                    lsa.buffer.push(Transition(lsa_obs, lsa_action,
                                               outcome.lsa_reward_value, next_lsa_obs,
                                               terminal=outcome.done))
                    lsa.update()
                for agent in pa_agents:
                    agent.update()
            if lsa is not None:
                lsa_obs = next_lsa_obs
            if outcome.done:
                if learn and pa_agents:
                    final_obs = [norm.normalize(o, update=False)
                                 for norm, o in zip(pa_norms, env.peek_pa_observations(cs, cb))]
                    for i, agent in enumerate(pa_agents):
                        if pending_pa[i] is not None:
                            s, a, r = pending_pa[i]
                            agent.buffer.push(Transition(s, a, r, final_obs[i], terminal=True))
                            pending_pa[i] = None
                break

        log = env.log
        logs.append(log)
        par = log.par()
        bills = log.prosumer_bills()
        row = {
            "episode": episode,
            "lse_profit": log.lse_profit_dollars(config.dt_hours),
            "par": par if par is not None else float("nan"),
            "mean_bill": float(bills.mean()) if len(bills) else 0.0,
            "lsa_return": lsa_return,
            "mean_pa_return": float(pa_returns.mean()) if len(pa_agents) else 0.0,
            "mean_cs": float(log.cs[: log.steps_filled].mean()),
            "mean_abs_lmp_gap": float(np.mean(np.abs(
                log.lmp_rt[: log.steps_filled] - log.lmp_da[: log.steps_filled]))),
            "sunny": int(log.sunny),
            "infeasible_steps": int(log.infeasible.sum()),
        }
        metrics.append(row)
        if progress is not None:
            progress(episode, row)
        if (checkpoint_dir is not None and config.checkpoint_every > 0
                and (episode + 1) % config.checkpoint_every == 0):
            _persist_checkpoints(checkpoint_dir, episode, lsa, lsa_norm,
                                 pa_agents, pa_norms)

    return TrainResult(
        config=config, metrics=metrics, episode_logs=logs,
        lsa_agent=lsa, pa_agents=pa_agents,
        lsa_normalizer=lsa_norm, pa_normalizers=pa_norms,
        forecaster=forecaster, forecaster_metrics=fc_metrics,
        world=world, da_forecasts=da,
    )
