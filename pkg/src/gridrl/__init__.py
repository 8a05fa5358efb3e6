"""Electricity-market simulator: recurrent wind forecasting plus multi-agent
deterministic-policy-gradient pricing and battery arbitrage, built on numpy."""

__version__ = "0.1.0"
