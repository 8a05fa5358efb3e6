"""Synthetic exogenous data and the wind CSV contract.

Wind is generated at 10-minute cadence: a diurnal wind-speed sinusoid plus
AR(1) noise, pushed through a cubic power curve and scaled by a per-day
amplitude regime. When the temperature cue is enabled, today's temperature
carries a signature of tomorrow's regime (a weather front announcing
itself), which is what makes day-ahead learning possible for the forecaster
while a pure persistence band stays blind to regime shifts.

Household profiles are a double-peak demand curve with per-household jitter
and a clipped half-sine PV curve scaled down on cloudy days.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from gridrl.errors import DataError
from gridrl.forecast import FEATURES, WindRecord

STEPS_PER_DAY = 96  # 24 h at 15-minute resolution
DT_HOURS = 0.25


@dataclass(frozen=True)
class WindModelSpec:
    mean_speed: float = 8.0          # m/s
    diurnal_amplitude: float = 2.5   # m/s
    diurnal_phase_hours: float = 14.0
    ar1_coeff: float = 0.9
    ar1_sigma: float = 0.7
    cut_in: float = 3.0              # m/s
    rated: float = 12.0              # m/s
    p_max: float = 50.0              # MW
    power_noise_sigma: float = 0.5   # MW
    regime_levels: tuple[float, ...] = (1.0,)
    regime_switch_prob: float = 0.0
    temp_cue: bool = False
    temp_cue_gain: float = 10.0      # deg C per unit of next-day regime level


@dataclass(frozen=True)
class DemandModelSpec:
    base_kw: float = 0.9
    morning_peak_kw: float = 2.2
    evening_peak_kw: float = 3.2
    morning_hour: float = 8.0
    evening_hour: float = 19.0
    peak_width_hours: float = 2.5
    jitter_frac: float = 0.10


@dataclass(frozen=True)
class PvModelSpec:
    peak_kw: float = 7.0
    sunrise_hour: float = 6.0
    sunset_hour: float = 18.0
    cloudy_scale: float = 0.35


@dataclass(frozen=True)
class SyntheticProfileSpec:
    days: int = 30
    start: datetime = field(default_factory=lambda: datetime(2024, 1, 1, tzinfo=timezone.utc))
    cadence_minutes: int = 10
    wind: WindModelSpec = field(default_factory=WindModelSpec)
    demand: DemandModelSpec = field(default_factory=DemandModelSpec)
    pv: PvModelSpec = field(default_factory=PvModelSpec)
    p_sunny: float = 0.6


def power_curve(speed: np.ndarray, wind: WindModelSpec) -> np.ndarray:
    """Cubic ramp from cut-in to rated speed, flat at the plant maximum."""
    frac = np.clip((speed - wind.cut_in) / (wind.rated - wind.cut_in), 0.0, 1.0)
    return wind.p_max * frac**3


def daily_regime_factors(wind: WindModelSpec, days: int, rng: np.random.Generator) -> np.ndarray:
    levels = wind.regime_levels
    factors = np.empty(days)
    state = 0
    for d in range(days):
        if d > 0 and len(levels) > 1 and rng.uniform() < wind.regime_switch_prob:
            state = (state + 1) % len(levels)
        factors[d] = levels[state]
    return factors


def synthesize_wind(spec: SyntheticProfileSpec, seed: int,
                    regime_factors: np.ndarray | None = None) -> list[WindRecord]:
    """Deterministic 10-minute wind series for `spec.days` days."""
    if spec.days < 1:
        raise DataError("day count must be >= 1")
    rng = np.random.default_rng([seed, 0x77696E64])
    wind = spec.wind
    per_day = int(round(24 * 60 / spec.cadence_minutes))
    n = spec.days * per_day
    hours = np.arange(n) * (spec.cadence_minutes / 60.0)

    ar = np.zeros(n)
    noise = rng.normal(0.0, wind.ar1_sigma, size=n)
    for t in range(1, n):
        ar[t] = wind.ar1_coeff * ar[t - 1] + noise[t]
    speed = np.clip(
        wind.mean_speed
        + wind.diurnal_amplitude * np.sin(2 * np.pi * (hours - wind.diurnal_phase_hours) / 24.0)
        + ar,
        0.0, None,
    )
    if regime_factors is None:
        regime_factors = daily_regime_factors(wind, spec.days, rng)
    elif len(regime_factors) != spec.days:
        raise DataError("regime_factors length must equal day count")
    day_idx = (hours // 24.0).astype(int)
    power = power_curve(speed, wind) * regime_factors[day_idx]
    power = np.clip(power + rng.normal(0.0, wind.power_noise_sigma, size=n), 0.0, wind.p_max)

    direction = np.mod(180.0 + 60.0 * np.sin(2 * np.pi * hours / (24.0 * 7))
                       + rng.normal(0.0, 4.0, size=n), 360.0)
    temperature = 12.0 + 6.0 * np.sin(2 * np.pi * (hours - 15.0) / 24.0)
    if wind.temp_cue:
        next_factor = regime_factors[np.minimum(day_idx + 1, spec.days - 1)]
        temperature = temperature + wind.temp_cue_gain * next_factor
    temperature = temperature + rng.normal(0.0, 0.3, size=n)

    step = timedelta(minutes=spec.cadence_minutes)
    return [
        WindRecord(
            timestamp=spec.start + i * step,
            wind_speed=float(speed[i]),
            wind_direction=float(direction[i]),
            temperature=float(temperature[i]),
            active_power=float(power[i]),
        )
        for i in range(n)
    ]


def household_demand_curve(spec: DemandModelSpec, rng: np.random.Generator,
                           n_steps: int = STEPS_PER_DAY) -> np.ndarray:
    """Double-peak daily demand in kW with multiplicative per-household jitter."""
    hours = np.arange(n_steps) * (24.0 / n_steps)
    curve = np.full(n_steps, spec.base_kw)
    for peak_kw, peak_hour in ((spec.morning_peak_kw, spec.morning_hour),
                               (spec.evening_peak_kw, spec.evening_hour)):
        curve = curve + peak_kw * np.exp(-0.5 * ((hours - peak_hour) / spec.peak_width_hours) ** 2)
    jitter = 1.0 + spec.jitter_frac * rng.standard_normal(n_steps)
    return np.clip(curve * jitter, 0.0, None)


def pv_curve(spec: PvModelSpec, sunny: bool, rng: np.random.Generator,
             n_steps: int = STEPS_PER_DAY) -> np.ndarray:
    """Clipped half-sine over daylight, scaled down under a cloudy label."""
    hours = np.arange(n_steps) * (24.0 / n_steps)
    daylight = (hours >= spec.sunrise_hour) & (hours <= spec.sunset_hour)
    phase = (hours - spec.sunrise_hour) / (spec.sunset_hour - spec.sunrise_hour)
    curve = np.where(daylight, np.sin(np.pi * np.clip(phase, 0.0, 1.0)), 0.0)
    scale = 1.0 if sunny else spec.cloudy_scale
    shape_noise = 1.0 + 0.05 * rng.standard_normal(n_steps)
    return np.clip(spec.peak_kw * scale * curve * shape_noise, 0.0, spec.peak_kw)


def draw_weather_labels(p_sunny: float, days: int, rng: np.random.Generator) -> np.ndarray:
    """Per-day sunny/cloudy labels, exposed to agents one day in advance."""
    return rng.uniform(size=days) < p_sunny


# ---------------------------------------------------------------------------
# wind CSV contract

CSV_HEADER = ["timestamp", "wind_speed", "wind_direction", "temperature", "active_power"]


def write_wind_csv(records: list[WindRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([
                r.timestamp.isoformat(),
                *("" if r.get(f) is None else repr(r.get(f)) for f in FEATURES),
            ])


def load_wind_csv(path, scale_to_p_max: float | None = None) -> list[WindRecord]:
    """Parse the wind CSV; empty fields stay missing for later imputation."""
    records: list[WindRecord] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected header {CSV_HEADER}")
        if [h.strip() for h in header] != CSV_HEADER:
            raise DataError(f"{path}: bad header {header!r}, expected {CSV_HEADER}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise DataError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            try:
                ts = datetime.fromisoformat(row[0])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad timestamp {row[0]!r}: {exc}") from exc
            values = []
            for col, cell in zip(CSV_HEADER[1:], row[1:]):
                if cell == "":
                    values.append(None)
                else:
                    try:
                        values.append(float(cell))
                    except ValueError as exc:
                        raise DataError(f"{path}:{lineno}: bad {col} value {cell!r}") from exc
            records.append(WindRecord(ts, *values))
    for a, b in zip(records, records[1:]):
        if b.timestamp <= a.timestamp:
            raise DataError(f"{path}: timestamps not strictly increasing at {b.timestamp}")
    if scale_to_p_max is not None:
        observed = [r.active_power for r in records if r.active_power is not None]
        peak = max(observed) if observed else 0.0
        if peak > 0:
            factor = scale_to_p_max / peak
            for r in records:
                if r.active_power is not None:
                    r.active_power *= factor
    return records


def wind_csv_text(records: list[WindRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow([
            r.timestamp.isoformat(),
            *("" if r.get(f) is None else repr(r.get(f)) for f in FEATURES),
        ])
    return buf.getvalue()
