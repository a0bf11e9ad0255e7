"""Rebuilding a collateral history from vault events.

A miniature vault-event stream: two ETH vault types (they aggregate under
one category), a PSM holding fiat-backed stablecoins at par, and an RWA
vault whose on-paper valuation jumps through an oracle update. Replaying
the deltas yields the daily category breakdown and the average crypto
portfolio used as the historical benchmark.
"""

import datetime as dt
from decimal import Decimal

import numpy as np

from collateralopt import (
    PipUpdate,
    PriceTable,
    VaultEvent,
    build_collateral_series,
    historical_portfolio,
)

UTC = dt.timezone.utc
start = dt.date(2021, 1, 1)


def at(day, hour=9):
    d = start + dt.timedelta(days=day)
    return dt.datetime(d.year, d.month, d.day, hour, tzinfo=UTC)


events = [
    VaultEvent(100, at(0), "ETH-A", "ETH", Decimal("40")),
    VaultEvent(120, at(3), "ETH-B", "ETH", Decimal("10")),
    VaultEvent(140, at(6), "WBTC-A", "WBTC", Decimal("1.5")),
    VaultEvent(160, at(10), "PSM-USDC-A", "USDC", Decimal("30000")),
    VaultEvent(180, at(12), "RWA001-A", "RWA001", Decimal("1")),
    VaultEvent(200, at(20), "ETH-A", "ETH", Decimal("-40")),  # full exit of ETH-A
]
pips = [
    PipUpdate(180, at(12), "RWA001-A", Decimal("1060")),
    PipUpdate(240, at(25), "RWA001-A", Decimal("1600000")),  # oracle revaluation
]

n_days = 31
dates = tuple(start + dt.timedelta(days=i) for i in range(n_days))
prices = np.column_stack([np.full(n_days, 1500.0), np.full(n_days, 40000.0)])
table = PriceTable(dates=dates, symbols=("ETH", "WBTC"), prices=prices)

series = build_collateral_series(events, table, pips, end_date=start + dt.timedelta(days=30))

print(f"{'date':>12} " + " ".join(f"{c:>12}" for c in series.category_names()) + f" {'total':>14}")
for i in (0, 3, 6, 10, 12, 20, 25, 30):
    row = " ".join(f"{series.categories[c][i]:12,.0f}" for c in series.category_names())
    print(f"{series.dates[i].isoformat():>12} {row} {series.total_usd[i]:14,.0f}")

print("\nnote the RWA column stepping 1,060 -> 1,600,000 at the oracle update,")
print("and ETH dropping when ETH-A exits while ETH-B stays.\n")

hist = historical_portfolio(series, top_k=2)
print("average crypto (ERC-20) portfolio over the sample:")
for s, w in zip(hist.symbols, hist.weights):
    print(f"  {s:>6}  {w:.4f}")
