import csv
import datetime as dt

import numpy as np
import pytest

from collateralopt.market_data import PriceTable

D0 = dt.date(2021, 1, 1)


def daterange(n, start=D0):
    return [start + dt.timedelta(days=i) for i in range(n)]


def make_table(prices, symbols=None, start=D0):
    prices = np.asarray(prices, dtype=float)
    if prices.ndim == 1:
        prices = prices[:, None]
    symbols = symbols or tuple(f"T{i}" for i in range(prices.shape[1]))
    return PriceTable(
        dates=tuple(daterange(prices.shape[0], start)),
        symbols=tuple(symbols),
        prices=prices,
    )


def gbm_prices(n_days, mu, vols, corr, seed, p0=100.0):
    """Correlated log-normal sample paths for building fixtures."""
    rng = np.random.default_rng(seed)
    vols = np.asarray(vols, dtype=float)
    cov = np.asarray(corr, dtype=float) * vols * vols[:, None]
    shocks = rng.standard_normal((n_days - 1, len(vols))) @ np.linalg.cholesky(cov).T + mu
    return p0 * np.exp(np.vstack([np.zeros(len(vols)), np.cumsum(shocks, axis=0)]))


def write_prices_csv(path, table, float_fmt="{:.8f}"):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "symbol", "close_usd"])
        for i, d in enumerate(table.dates):
            for j, s in enumerate(table.symbols):
                writer.writerow([d.isoformat(), s, float_fmt.format(table.prices[i, j])])
    return path


@pytest.fixture(scope="session")
def six_asset_table():
    symbols = ("WBTC", "ETH", "LINK", "BAT", "ZRX", "MATIC")
    vols = [0.030, 0.042, 0.055, 0.050, 0.060, 0.065]
    corr = np.full((6, 6), 0.55) + 0.45 * np.eye(6)
    prices = gbm_prices(800, 0.0004, vols, corr, seed=314)
    return make_table(prices, symbols)


@pytest.fixture()
def six_asset_csv(tmp_path, six_asset_table):
    return write_prices_csv(tmp_path / "prices.csv", six_asset_table)
