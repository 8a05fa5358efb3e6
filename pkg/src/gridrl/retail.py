"""Residential-side physics and money flows.

Sign convention: battery action b > 0 discharges toward the home, matching
the net-load identity e = d - g - b, so state of charge follows
soc <- soc - b*dt/Q. A prosumer with e >= 0 buys at the retail buy price;
negative e sells the surplus back at the sell price (negative bill = revenue).
"""

from __future__ import annotations

from dataclasses import dataclass

from gridrl.errors import DataError

DT_HOURS = 0.25  # 15-minute settlement interval


@dataclass(frozen=True)
class BatterySpec:
    capacity_kwh: float = 10.0
    soc_min: float = 0.10
    soc_max: float = 0.90
    p_charge_max_kw: float = 2.0
    p_discharge_max_kw: float = 2.0
    soc0: float = 0.10
    charge_efficiency: float = 1.0     # grid kWh -> stored kWh
    discharge_efficiency: float = 1.0  # stored kWh -> delivered kWh

    def __post_init__(self):
        if not (0.0 <= self.soc_min < self.soc_max <= 1.0):
            raise ValueError("need 0 <= soc_min < soc_max <= 1")
        if self.p_charge_max_kw <= 0 or self.p_discharge_max_kw <= 0:
            raise ValueError("charge/discharge power limits must be positive")
        if not (self.soc_min <= self.soc0 <= self.soc_max):
            raise ValueError("initial state of charge outside the allowed band")
        if not (0.0 < self.charge_efficiency <= 1.0 and 0.0 < self.discharge_efficiency <= 1.0):
            raise ValueError("efficiencies must lie in (0, 1]")


@dataclass
class ProsumerState:
    demand_kw: float = 0.0
    pv_kw: float = 0.0
    soc: float = 0.10
    last_action_kw: float = 0.0  # positive = discharge


@dataclass(frozen=True)
class PriceSignal:
    sell: float  # $/kWh paid to exporting users
    buy: float   # $/kWh charged to importing users
    interval: int = 0


def battery_step(spec: BatterySpec, soc: float, requested_kw: float,
                 dt: float = DT_HOURS) -> tuple[float, float]:
    """Clip a charge/discharge request to power and SoC limits.

    Returns (effective_kw, new_soc). Clipping absorbs every violation:
    first the power rating, then whatever energy headroom the SoC band
    leaves over this interval. Efficiencies apply on the stored side:
    charging banks eta_c of the grid energy, discharging drains 1/eta_d of
    the delivered energy (both default to 1, the lossless model).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    b = min(max(requested_kw, -spec.p_charge_max_kw), spec.p_discharge_max_kw)
    # discharge is bounded by stored energy above soc_min, charge by headroom
    max_discharge = (soc - spec.soc_min) * spec.capacity_kwh * spec.discharge_efficiency / dt
    max_charge = (spec.soc_max - soc) * spec.capacity_kwh / (spec.charge_efficiency * dt)
    b = min(max(b, -max_charge), max_discharge)
    if b >= 0:
        new_soc = soc - b * dt / (spec.discharge_efficiency * spec.capacity_kwh)
    else:
        new_soc = soc - b * spec.charge_efficiency * dt / spec.capacity_kwh
    new_soc = min(max(new_soc, spec.soc_min), spec.soc_max)
    return b, new_soc


def prosumer_net_load(demand_kw: float, pv_kw: float, battery_kw: float) -> float:
    """Net energy demand e = d - g - b; e >= 0 means the prosumer buys."""
    return demand_kw - pv_kw - battery_kw


def is_buying(net_load_kw: float) -> bool:
    """Buyer/seller indicator: non-negative net load buys from the LSE."""
    return net_load_kw >= 0.0


def bill_increment(net_load_kw: float, price: PriceSignal, dt: float = DT_HOURS) -> float:
    """Dollar flow for one interval; negative values are seller revenue."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    rate = price.buy if is_buying(net_load_kw) else price.sell
    return net_load_kw * dt * rate


def aggregate_load(user_loads_kw) -> float:
    """Sum of consumer demands and prosumer net loads; may be negative."""
    return float(sum(user_loads_kw))


def lse_total_cost(load_da, price_da, load_rt, price_rt, buyback_cost,
                   dt: float = DT_HOURS) -> float:
    """Wholesale procurement cost across one horizon.

    load_* are average MW per interval, price_* $/MWh, buyback_cost a $
    series already settled at the retail buy price. The deficiency term
    settles (RT - DA) at the real-time price.
    """
    n = len(load_da)
    if not (len(price_da) == len(load_rt) == len(price_rt) == len(buyback_cost) == n):
        raise DataError("interval series must share one length")
    total = 0.0
    for t in range(n):
        deficiency = load_rt[t] - load_da[t]
        total += (load_da[t] * price_da[t] + deficiency * price_rt[t]) * dt
        total += buyback_cost[t]
    return total


def lse_profit(retail_sales: float, total_cost: float) -> float:
    """Net profit: retail revenue minus wholesale-plus-buyback cost."""
    return retail_sales - total_cost


def peak_to_average(loads) -> float | None:
    """PAR = T * max(load) / sum(load); None when total load is not positive."""
    if len(loads) == 0:
        raise DataError("PAR needs at least one interval")
    total = float(sum(loads))
    if total <= 0:
        return None
    return len(loads) * float(max(loads)) / total


@dataclass
class IntervalSettlement:
    """Money flows between the LSE and its users for one interval."""

    bills: list[float]          # per-user $ this interval (negative = paid out)
    revenue: float              # $ collected from buying users
    buyback_cost: float         # $ paid to selling users
    aggregate_load_kw: float
    seller_energy_kw: float     # total |e| over selling prosumers


def settle_interval(consumer_loads_kw, prosumer_net_loads_kw, price: PriceSignal,
                    dt: float = DT_HOURS) -> IntervalSettlement:
    """Bill every user and split the flows into LSE revenue and buyback."""
    bills = []
    revenue = 0.0
    buyback = 0.0
    seller_kw = 0.0
    for load in list(consumer_loads_kw) + list(prosumer_net_loads_kw):
        amount = bill_increment(load, price, dt)
        bills.append(amount)
        if amount >= 0:
            revenue += amount
        else:
            buyback += -amount
    for e in prosumer_net_loads_kw:
        if not is_buying(e):
            seller_kw += -e
    return IntervalSettlement(
        bills=bills,
        revenue=revenue,
        buyback_cost=buyback,
        aggregate_load_kw=aggregate_load(list(consumer_loads_kw) + list(prosumer_net_loads_kw)),
        seller_energy_kw=seller_kw,
    )
