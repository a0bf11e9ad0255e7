"""Shared synthetic-market builders for the demo scripts."""

import datetime as dt

import numpy as np

from collateralopt import PriceTable

TOKENS = ("WBTC", "ETH", "LINK", "BAT", "ZRX", "MATIC")
START = dt.date(2021, 1, 1)


def market(n_days=800, seed=314, drift=0.0004):
    """Correlated six-token price history with crypto-like volatilities."""
    rng = np.random.default_rng(seed)
    vols = np.array([0.030, 0.042, 0.055, 0.050, 0.060, 0.065])
    corr = np.full((6, 6), 0.55) + 0.45 * np.eye(6)
    cov = corr * vols * vols[:, None]
    shocks = rng.standard_normal((n_days - 1, 6)) @ np.linalg.cholesky(cov).T + drift
    prices = 100.0 * np.exp(np.vstack([np.zeros(6), np.cumsum(shocks, axis=0)]))
    dates = tuple(START + dt.timedelta(days=i) for i in range(n_days))
    return PriceTable(dates=dates, symbols=TOKENS, prices=prices)


def print_weights(title, symbols, weights):
    print(f"{title}:")
    for s, w in sorted(zip(symbols, weights), key=lambda t: -t[1]):
        bar = "#" * int(round(40 * w))
        print(f"  {s:>6}  {w:7.4f}  {bar}")
