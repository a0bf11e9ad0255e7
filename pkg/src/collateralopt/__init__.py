"""Risk-minimal crypto collateral portfolios and failure-probability simulation.

The package covers the full pipeline for managing the crypto portion of an
overcollateralized stablecoin's backing:

* :mod:`collateralopt.market_data` — price ingestion, log returns,
  covariance/semicovariance estimation;
* :mod:`collateralopt.portfolio_opt` — minimum-variance and
  minimum-semivariance portfolios on the capped simplex, efficient
  frontier, token-universe filtering;
* :mod:`collateralopt.risk_sim` — failure-probability Monte Carlo via
  historical bootstrap and correlated GBM;
* :mod:`collateralopt.dss_ledger` — replay of vault-event exports into
  daily collateral series and historical portfolios;
* :mod:`collateralopt.backtest` — rolling-window sweeps and portfolio
  comparisons;
* :mod:`collateralopt.cli` — the ``collateralopt`` command.
"""

__version__ = "0.1.0"

from .backtest import ComparisonRow, RollingPoint, RollingSpec, compare_portfolios, rolling_optimal
from .dss_ledger import (
    CategoryRules,
    CollateralSeries,
    HistoricalPortfolio,
    PipUpdate,
    VaultEvent,
    build_collateral_series,
    historical_portfolio,
    load_events,
    load_pip_updates,
)
from .errors import (
    CollateralOptError,
    CoverageError,
    DomainError,
    EmptyPortfolioError,
    InfeasibleError,
    InsufficientDataError,
    ParseError,
    UndefinedRatioError,
)
from .market_data import (
    DAYS_PER_YEAR,
    PriceTable,
    ReturnMatrix,
    RiskModel,
    UniverseEntry,
    caps_vector,
    estimate_risk_model,
    load_prices,
    load_universe,
    log_returns,
    sample_window,
)
from .portfolio_opt import (
    FrontierPoint,
    Portfolio,
    QPSolution,
    UniverseFilter,
    efficient_frontier,
    filter_universe,
    min_semivariance,
    min_variance,
    portfolio_semivariance,
    portfolio_variance,
    sharpe_ratio,
    solve_min_semivariance,
    solve_min_variance,
)
from .risk_sim import (
    PricePath,
    SimConfig,
    SimReport,
    annualized_metrics,
    is_failed,
    iter_gbm_runs,
    path_from_log_returns,
    path_from_prices,
    portfolio_value_ratio,
    sampled_window_starts,
    simulate_gbm,
    simulate_gbm_resampled,
    simulate_historical,
)
