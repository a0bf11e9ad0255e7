"""Rolling-window optimization sweeps and multi-portfolio risk comparison."""

from __future__ import annotations

import dataclasses
import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from .errors import CollateralOptError, DomainError, InsufficientDataError
from .market_data import PriceTable, ReturnMatrix, estimate_risk_model, log_returns
from .portfolio_opt import Portfolio, solve_min_semivariance, solve_min_variance
from .risk_sim import (
    SimConfig,
    annualized_metrics,
    simulate_gbm_resampled,
    simulate_historical,
)

OBJECTIVES = ("variance", "semivariance")


@dataclass(frozen=True)
class RollingSpec:
    """Configuration of a rolling optimal-portfolio sweep."""

    window_days: int
    step_days: int = 1
    objective: str = "variance"
    caps: float | dict[str, float] = 0.2
    universe: tuple[str, ...] = ()

    def __post_init__(self):
        if self.window_days < 2:
            raise DomainError("window_days must be >= 2")
        if self.step_days < 1:
            raise DomainError("step_days must be >= 1")
        if self.objective not in OBJECTIVES:
            raise DomainError(f"objective must be one of {OBJECTIVES}")
        object.__setattr__(self, "universe", tuple(self.universe))

    def caps_for(self, symbols) -> np.ndarray:
        if isinstance(self.caps, dict):
            missing = [s for s in symbols if s not in self.caps]
            if missing:
                raise DomainError(f"caps missing for: {', '.join(missing)}")
            return np.array([self.caps[s] for s in symbols], dtype=float)
        return np.full(len(symbols), float(self.caps))


@dataclass(frozen=True)
class RollingPoint:
    """One evaluation date of a rolling sweep."""

    date: dt.date
    portfolio: Portfolio | None
    excluded: tuple[str, ...] = ()
    error: str | None = None


def rolling_optimal(prices: PriceTable, spec: RollingSpec) -> list[RollingPoint]:
    """Optimal portfolio per evaluation date from trailing-window returns.

    The risk model at date ``d`` uses exactly the ``window_days`` returns
    ending at ``d``. Tokens without full price coverage over that window
    are excluded for that date (recorded per point); a date whose universe
    empties out is recorded as an error and the sweep continues.
    """
    universe = list(spec.universe) if spec.universe else list(prices.symbols)
    table = prices.select(universe)
    if table.n_dates < spec.window_days + 1:
        raise InsufficientDataError(
            f"prices span {table.n_dates} dates; need >= {spec.window_days + 1}"
        )
    points: list[RollingPoint] = []
    for j in range(spec.window_days, table.n_dates, spec.step_days):
        date = table.dates[j]
        block = table.prices[j - spec.window_days : j + 1, :]
        ok_cols = np.all(np.isfinite(block), axis=0)
        included = [s for s, ok in zip(universe, ok_cols) if ok]
        excluded = tuple(s for s, ok in zip(universe, ok_cols) if not ok)
        if not included:
            points.append(
                RollingPoint(date, None, excluded, "empty universe after coverage filtering")
            )
            continue
        returns = ReturnMatrix(
            symbols=tuple(included),
            returns=np.diff(np.log(block[:, ok_cols]), axis=0),
            window=(table.dates[j - spec.window_days], date),
        )
        try:
            caps = spec.caps_for(included)
            if spec.objective == "variance":
                portfolio, _ = solve_min_variance(estimate_risk_model(returns), caps)
            else:
                portfolio, _ = solve_min_semivariance(returns, caps)
            points.append(RollingPoint(date, portfolio, excluded))
        except CollateralOptError as exc:
            points.append(RollingPoint(date, None, excluded, str(exc)))
    return points


@dataclass(frozen=True)
class ComparisonRow:
    """Risk metrics of one named portfolio (Table-style comparison)."""

    name: str
    annual_volatility: float = math.nan
    annual_semideviation: float = math.nan
    historical_failure_prob: float = math.nan
    gbm_failure_prob: float = math.nan
    error: str | None = None


def compare_portfolios(
    portfolios: list[tuple[str, Portfolio]],
    prices: PriceTable,
    config: SimConfig,
    estimation_days: int = 200,
) -> list[ComparisonRow]:
    """One metrics row per named portfolio.

    Volatility and semideviation come from the full-history return series;
    failure probabilities from the historical bootstrap and the
    parameter-resampling GBM. Every row reuses ``config.seed``, so
    identical portfolios produce identical rows and differences between
    rows are driven by the portfolios, not by sampling noise.
    """
    rows: list[ComparisonRow] = []
    for name, portfolio in portfolios:
        try:
            sub = prices.select(list(portfolio.symbols))
            w = portfolio.weights
            vol, semidev = annualized_metrics(w, log_returns(sub))
            hist = simulate_historical(
                w, sub, dataclasses.replace(config, mode="historical")
            )
            gbm = simulate_gbm_resampled(
                w, sub, dataclasses.replace(config, mode="gbm"), estimation_days
            )
            rows.append(
                ComparisonRow(
                    name=name,
                    annual_volatility=vol,
                    annual_semideviation=semidev,
                    historical_failure_prob=hist.failure_probability,
                    gbm_failure_prob=gbm.failure_probability,
                )
            )
        except CollateralOptError as exc:
            rows.append(ComparisonRow(name=name, error=str(exc)))
    return rows
