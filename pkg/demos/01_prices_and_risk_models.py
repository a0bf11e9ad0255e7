"""From raw price quotes to a risk model.

Walks the data pipeline: write a prices CSV, load it with intersection
alignment, derive daily log returns, and estimate mean / covariance /
semicovariance. The semicovariance diagonal is always below the variance
diagonal because it only counts below-mean days.
"""

import tempfile
from pathlib import Path

import numpy as np

from collateralopt import estimate_risk_model, load_prices, log_returns

from _synthetic import market

table = market(n_days=400)

# Round-trip through the CSV schema the package ingests.
tmp = Path(tempfile.mkdtemp())
csv_path = tmp / "prices.csv"
with open(csv_path, "w") as fh:
    fh.write("date,symbol,close_usd\n")
    for i, d in enumerate(table.dates):
        for j, s in enumerate(table.symbols):
            fh.write(f"{d.isoformat()},{s},{table.prices[i, j]:.8f}\n")

loaded = load_prices(csv_path)
print(f"loaded {loaded.n_dates} dates x {len(loaded.symbols)} symbols from {csv_path}")

returns = log_returns(loaded)
print(f"return matrix: T={returns.n_obs}, window {returns.window[0]} .. {returns.window[1]}")

model = estimate_risk_model(returns)
ann = np.sqrt(365.0)
print("\nper-token daily stats (annualized vol / semidev):")
for i, s in enumerate(model.symbols):
    vol = np.sqrt(model.cov[i, i]) * ann
    semi = np.sqrt(model.semicov[i, i]) * ann
    print(f"  {s:>6}  vol {vol:6.1%}   semidev {semi:6.1%}")

corr = model.cov / np.sqrt(np.outer(np.diag(model.cov), np.diag(model.cov)))
print(f"\nmean pairwise correlation: {corr[np.triu_indices(6, 1)].mean():.3f}")
print(f"semicov diag <= cov diag everywhere: {bool(np.all(np.diag(model.semicov) <= np.diag(model.cov)))}")
