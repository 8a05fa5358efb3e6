"""Wholesale clearing: least-cost dispatch and a uniform marginal price.

Generators carry quadratic costs a0 + a1*P + a2*P^2, so marginal cost is
affine and the least-cost split solves by equal-incremental-cost
water-filling with active-set capacity handling. The wind plant enters as a
price-taking unit with constant marginal cost equal to its offer. The
clearing price is the cost of serving the next increment of load: the
cheapest marginal cost among units with remaining headroom, falling back to
the most expensive running unit when the system is at capacity.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from gridrl.errors import DataError

BALANCE_TOL = 1e-9


@dataclass(frozen=True)
class GeneratorSpec:
    name: str
    cost_coeffs: tuple[float, float, float]  # a0 [$], a1 [$/MWh], a2 [$/MWh^2]
    p_min: float
    p_max: float
    ramp_down: float | None = None  # MW per interval, magnitude; None -> p_max
    ramp_up: float | None = None

    def __post_init__(self):
        if not (0.0 <= self.p_min <= self.p_max):
            raise ValueError(f"{self.name}: need 0 <= p_min <= p_max")
        if self.cost_coeffs[2] < 0:
            raise ValueError(f"{self.name}: quadratic coefficient must be >= 0")
        for r in (self.ramp_down, self.ramp_up):
            if r is not None and not np.isfinite(r):
                raise ValueError(f"{self.name}: ramp bounds must be finite")

    @property
    def ramp_down_mw(self) -> float:
        return self.p_max if self.ramp_down is None else self.ramp_down

    @property
    def ramp_up_mw(self) -> float:
        return self.p_max if self.ramp_up is None else self.ramp_up

    def marginal_cost(self, p: float) -> float:
        return self.cost_coeffs[1] + 2.0 * self.cost_coeffs[2] * p

    def cost(self, p) -> float:
        a0, a1, a2 = self.cost_coeffs
        return a0 + a1 * p + a2 * p * p


@dataclass(frozen=True)
class WindPlantSpec:
    p_max: float = 50.0
    offer_price: float = 5.0  # $/MWh


@dataclass
class DispatchResult:
    outputs: dict[str, float]  # generator name -> MW
    wind_dispatched: float
    lmp: float
    total_variable_cost: float
    feasible: bool
    demand: float = 0.0

    @property
    def total_generation(self) -> float:
        return sum(self.outputs.values()) + self.wind_dispatched


def _effective_bounds(gens, prev_outputs):
    bounds = []
    for idx, g in enumerate(gens):
        lo, hi = g.p_min, g.p_max
        if prev_outputs is not None:
            prev = prev_outputs[idx]
            lo = max(lo, prev - g.ramp_down_mw)
            hi = min(hi, prev + g.ramp_up_mw)
        bounds.append((lo, min(hi, g.p_max)))
    return bounds


def economic_dispatch(demand: float, wind_available: float,
                      gens: list[GeneratorSpec], wind: WindPlantSpec,
                      prev_outputs: list[float] | None = None) -> DispatchResult:
    """Clear one interval. Infeasible demand sets the flag, never raises."""
    if demand < 0:
        raise ValueError(f"demand must be >= 0, got {demand}")
    if not (0.0 <= wind_available <= wind.p_max + 1e-9):
        raise ValueError(f"wind_available {wind_available} outside [0, {wind.p_max}]")
    if prev_outputs is not None and len(prev_outputs) != len(gens):
        raise DataError("prev_outputs length does not match generator roster")
    bounds = _effective_bounds(gens, prev_outputs)
    lo_total = sum(lo for lo, _ in bounds)
    hi_total = sum(hi for _, hi in bounds) + wind_available

    def result(outputs, wind_used, feasible):
        cost = sum(g.cost(p) for g, p in zip(gens, outputs)) + wind.offer_price * wind_used
        lmp = _clearing_price(gens, bounds, outputs, wind, wind_available, wind_used)
        return DispatchResult(
            outputs={g.name: float(p) for g, p in zip(gens, outputs)},
            wind_dispatched=float(wind_used),
            lmp=float(lmp),
            total_variable_cost=float(cost),
            feasible=feasible,
            demand=float(demand),
        )

    if demand > hi_total + BALANCE_TOL:
        return result([hi for _, hi in bounds], wind_available, feasible=False)
    if demand < lo_total - BALANCE_TOL:
        return result([lo for lo, _ in bounds], 0.0, feasible=False)

    # price coordinate: supply(lam) sums each unit's best response at price lam
    def supply_at(lam, upper):
        total = 0.0
        per_unit = []
        for g, (lo, hi) in zip(gens, bounds):
            a1, a2 = g.cost_coeffs[1], g.cost_coeffs[2]
            if a2 > 0:
                p = min(max((lam - a1) / (2.0 * a2), lo), hi)
            else:
                p = hi if (lam > a1 or (upper and lam >= a1)) else lo
            per_unit.append(p)
            total += p
        if lam > wind.offer_price or (upper and lam >= wind.offer_price):
            w = wind_available
        else:
            w = 0.0
        return total + w, per_unit, w

    lam_lo = min([wind.offer_price] + [g.marginal_cost(lo) for g, (lo, _) in zip(gens, bounds)]) - 1.0
    lam_hi = max([wind.offer_price] + [g.marginal_cost(hi) for g, (_, hi) in zip(gens, bounds)]) + 1.0
    for _ in range(200):
        mid = 0.5 * (lam_lo + lam_hi)
        if supply_at(mid, upper=True)[0] >= demand:
            lam_hi = mid
        else:
            lam_lo = mid
        if lam_hi - lam_lo < 1e-13 * max(1.0, abs(lam_hi)):
            break
    lam = lam_hi

    low_total, low_units, low_wind = supply_at(lam, upper=False)
    high_total, high_units, high_wind = supply_at(lam, upper=True)
    outputs = list(low_units)
    wind_used = low_wind
    residual = demand - low_total
    if residual > 0:
        # distribute over units that are marginal at lam (constant-cost plateaus),
        # wind first, then generators in roster order
        slots = []
        if high_wind > low_wind:
            slots.append(("wind", high_wind - low_wind))
        for idx in range(len(gens)):
            room = high_units[idx] - low_units[idx]
            if room > 0:
                slots.append((idx, room))
        for key, room in slots:
            take = min(room, residual)
            if key == "wind":
                wind_used += take
            else:
                outputs[key] += take
            residual -= take
            if residual <= 0:
                break
    # absorb float residue in any unit with slack so the balance is exact
    residue = demand - (sum(outputs) + wind_used)
    if residue != 0.0:
        for idx, (lo, hi) in enumerate(bounds):
            nudged = outputs[idx] + residue
            if lo - BALANCE_TOL <= nudged <= hi + BALANCE_TOL:
                outputs[idx] = min(max(nudged, lo), hi)
                break
        else:
            wind_used = min(max(wind_used + residue, 0.0), wind_available)
    return result(outputs, wind_used, feasible=True)


def _clearing_price(gens, bounds, outputs, wind, wind_available, wind_used):
    headroom_costs = []
    if wind_used < wind_available - BALANCE_TOL:
        headroom_costs.append(wind.offer_price)
    for g, (lo, hi), p in zip(gens, bounds, outputs):
        if p < hi - BALANCE_TOL:
            headroom_costs.append(g.marginal_cost(p))
    if headroom_costs:
        return min(headroom_costs)
    running = [g.marginal_cost(p) for g, p in zip(gens, outputs)]
    if wind_used > 0:
        running.append(wind.offer_price)
    return max(running) if running else wind.offer_price


def clear_day_ahead(forecast_load, forecast_wind, gens: list[GeneratorSpec],
                    wind: WindPlantSpec, chain_ramps: bool = True) -> list[DispatchResult]:
    """One DispatchResult per interval, ramp constraints chained in order."""
    if len(forecast_load) != len(forecast_wind):
        raise DataError(
            f"load series ({len(forecast_load)}) and wind series "
            f"({len(forecast_wind)}) differ in length"
        )
    results = []
    prev = None
    for load, w in zip(forecast_load, forecast_wind):
        res = economic_dispatch(float(load), float(np.clip(w, 0.0, wind.p_max)),
                                gens, wind, prev_outputs=prev)
        results.append(res)
        if chain_ramps:
            prev = [res.outputs[g.name] for g in gens]
    return results


def clear_real_time(actual_load, actual_wind, gens: list[GeneratorSpec],
                    wind: WindPlantSpec, chain_ramps: bool = True) -> list[DispatchResult]:
    """Same clearing rules as day-ahead, on realized series."""
    return clear_day_ahead(actual_load, actual_wind, gens, wind, chain_ramps=chain_ramps)


def check_power_balance(result: DispatchResult, demand: float, tol: float = 1e-6) -> bool:
    if not result.feasible:
        return False
    return abs(result.total_generation - demand) <= tol


def dispatch_trace_csv(results: list[DispatchResult], gens: list[GeneratorSpec]) -> str:
    """CSV trace: interval,lmp,<gen>_mw...,wind_mw,demand_mw."""
    buf = io.StringIO()
    cols = ["interval", "lmp"] + [f"{g.name.lower()}_mw" for g in gens] + ["wind_mw", "demand_mw"]
    buf.write(",".join(cols) + "\n")
    for t, res in enumerate(results):
        row = [str(t), repr(res.lmp)]
        row += [repr(res.outputs[g.name]) for g in gens]
        row += [repr(res.wind_dispatched), repr(res.demand)]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def default_generators() -> list[GeneratorSpec]:
    """Base and reserve gas units for the five-bus test system."""
    return [
        GeneratorSpec("G1", (100.0, 10.0, 0.2), 0.0, 15.0),
        GeneratorSpec("G2", (200.0, 15.0, 0.35), 0.0, 100.0),
    ]
