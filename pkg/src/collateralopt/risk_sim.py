"""Failure-probability estimation for overcollateralized portfolios.

A portfolio with initial overcollateralization ``gamma`` and required ratio
``theta`` survives day ``t`` while ``v(t)/v(0) >= theta/gamma``; the first
day the value ratio drops below that barrier ends the run as failed.
Checks happen at daily closes.

Two path models are provided:

* historical bootstrap — each run replays a uniformly sampled contiguous
  window of realized prices;
* correlated GBM — each run draws daily multivariate-normal log-return
  shocks, either from one fixed risk model or (the default for reporting)
  from a model re-estimated on a freshly sampled historical window per run.

Determinism: run ``k`` uses an RNG stream spawned from ``(seed, k)``, so
results do not depend on execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import DomainError, InsufficientDataError
from .market_data import (
    DAYS_PER_YEAR,
    PriceTable,
    ReturnMatrix,
    RiskModel,
    sample_window,
)

MODES = ("historical", "gbm")


@dataclass(frozen=True)
class SimConfig:
    """Parameters of a failure-probability simulation."""

    gamma: float = 2.0
    theta: float = 1.5
    horizon_days: int = 365
    n_runs: int = 10_000
    seed: int = 0
    mode: str = "historical"
    check_frequency: str = "daily"

    def __post_init__(self):
        if not (self.gamma > self.theta > 1.0):
            raise DomainError(
                f"need gamma > theta > 1, got gamma={self.gamma}, theta={self.theta}"
            )
        if self.horizon_days < 1:
            raise DomainError("horizon_days must be >= 1")
        if self.n_runs < 1:
            raise DomainError("n_runs must be >= 1")
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.check_frequency != "daily":
            raise DomainError("only daily failure checks are supported")

    @property
    def barrier(self) -> float:
        """Survival threshold for the value ratio v(t)/v(0)."""
        return self.theta / self.gamma


@dataclass(frozen=True)
class PricePath:
    """Per-symbol price multipliers relative to day 0 (first row all ones)."""

    multipliers: np.ndarray  # (horizon_days + 1, M)

    def __post_init__(self):
        mult = np.array(self.multipliers, dtype=float, order="C")
        if mult.ndim != 2:
            raise DomainError("multipliers must be a (days+1, M) matrix")
        if not np.all(np.isfinite(mult)) or np.any(mult <= 0.0):
            raise DomainError("multipliers must be positive and finite")
        if not np.allclose(mult[0], 1.0, rtol=0.0, atol=1e-12):
            raise DomainError("multipliers must be normalized to 1 at day 0")
        mult.setflags(write=False)
        object.__setattr__(self, "multipliers", mult)

    @property
    def horizon_days(self) -> int:
        return self.multipliers.shape[0] - 1


@dataclass(frozen=True)
class SimReport:
    """Aggregate outcome of one simulation configuration."""

    failure_probability: float
    stderr: float
    annual_volatility: float
    annual_semideviation: float
    n_runs: int
    mode: str
    seed: int
    gamma: float
    theta: float
    horizon_days: int

    def as_dict(self) -> dict:
        return {
            "failure_probability": self.failure_probability,
            "stderr": self.stderr,
            "annual_volatility": self.annual_volatility,
            "annual_semideviation": self.annual_semideviation,
            "n_runs": self.n_runs,
            "mode": self.mode,
            "seed": self.seed,
            "gamma": self.gamma,
            "theta": self.theta,
            "horizon_days": self.horizon_days,
        }


def path_from_prices(window_prices) -> PricePath:
    """Normalize a (days+1, M) slice of prices into a PricePath."""
    p = np.asarray(window_prices, dtype=float)
    return PricePath(p / p[0])


def path_from_log_returns(shocks) -> PricePath:
    """Build a PricePath from a (days, M) matrix of daily log returns."""
    shocks = np.atleast_2d(np.asarray(shocks, dtype=float))
    mult = np.exp(np.cumsum(shocks, axis=0))
    return PricePath(np.vstack((np.ones(shocks.shape[1]), mult)))


def portfolio_value_ratio(weights, path: PricePath, t: int) -> float:
    """v(t)/v(0) for constant token counts: the weighted multiplier sum."""
    if t < 0 or t > path.horizon_days:
        raise DomainError(f"day {t} outside path horizon {path.horizon_days}")
    return float(np.dot(np.asarray(weights, dtype=float), path.multipliers[t]))


def is_failed(ratio: float, config: SimConfig) -> bool:
    """True iff the value ratio violates the survival condition.

    The boundary survives: a ratio exactly equal to theta/gamma is safe.
    """
    if ratio <= 0.0:
        raise DomainError(f"value ratio must be positive, got {ratio}")
    return ratio < config.barrier


def _run_seed_sequences(seed: int, n_runs: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n_runs)


def _annualize_series(r: np.ndarray) -> tuple[float, float]:
    if r.size < 2:
        return 0.0, 0.0
    root = math.sqrt(DAYS_PER_YEAR)
    vol = float(np.std(r, ddof=1)) * root
    d = np.minimum(r - r.mean(), 0.0)
    semidev = math.sqrt(float(d @ d) / r.size) * root
    return vol, semidev


def _weights_for(table_or_model, weights) -> np.ndarray:
    w = np.ascontiguousarray(weights, dtype=float)
    n = len(table_or_model.symbols)
    if w.shape != (n,):
        raise DomainError(f"weights shape {w.shape} does not match {n} symbols")
    if np.any(w < -1e-10) or abs(w.sum() - 1.0) > 1e-6:
        raise DomainError("weights must be non-negative and sum to 1")
    return w


def sampled_window_starts(table: PriceTable, config: SimConfig) -> np.ndarray:
    """Start indices of the horizon window drawn by each run (deterministic)."""
    if table.n_dates < config.horizon_days + 1:
        raise InsufficientDataError(
            f"history spans {table.n_dates} dates; need >= {config.horizon_days + 1}"
        )
    starts = np.empty(config.n_runs, dtype=np.int64)
    for k, ss in enumerate(_run_seed_sequences(config.seed, config.n_runs)):
        rng = np.random.Generator(np.random.PCG64(ss))
        start_date, _ = sample_window(table, config.horizon_days, rng)
        starts[k] = table.index_of(start_date)
    return starts


def simulate_historical(weights, table: PriceTable, config: SimConfig) -> SimReport:
    """Failure probability under bootstrap replay of historical windows.

    Each run draws one contiguous ``horizon_days`` window uniformly at
    random and fails if the value ratio breaches the barrier on any day.
    Reported volatility/semideviation describe the pooled simulated daily
    portfolio returns (log-return convention, weighted per asset).
    """
    w = _weights_for(table, weights)
    if not table.dense:
        raise DomainError("historical simulation needs a dense price table")
    horizon = config.horizon_days
    prices = table.prices
    log_ret = np.diff(np.log(prices), axis=0)
    starts = sampled_window_starts(table, config)
    barrier = config.barrier
    failures = 0
    pooled = np.empty((config.n_runs, horizon))
    for k, s in enumerate(starts):
        window = prices[s : s + horizon + 1]
        ratios = window @ (w / window[0])
        if np.any(ratios[1:] < barrier):
            failures += 1
        pooled[k] = log_ret[s : s + horizon] @ w
    p = failures / config.n_runs
    vol, semidev = _annualize_series(pooled.ravel())
    return SimReport(
        failure_probability=p,
        stderr=math.sqrt(p * (1.0 - p) / config.n_runs),
        annual_volatility=vol,
        annual_semideviation=semidev,
        n_runs=config.n_runs,
        mode="historical",
        seed=config.seed,
        gamma=config.gamma,
        theta=config.theta,
        horizon_days=horizon,
    )


def psd_factor(cov: np.ndarray) -> np.ndarray:
    """Matrix F with F F' = cov; Cholesky, falling back to a clipped
    eigenfactor for semidefinite inputs."""
    cov = np.asarray(cov, dtype=float)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        eigvals, eigvecs = np.linalg.eigh(cov)
        lam_max = max(float(eigvals[-1]), 0.0)
        if float(eigvals[0]) < -1e-10 * max(1.0, lam_max):
            raise DomainError(
                f"covariance is not positive semidefinite (min eig {eigvals[0]:.3e})"
            ) from None
        return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


def iter_gbm_runs(model: RiskModel, config: SimConfig) -> Iterator[np.ndarray]:
    """Per-run (horizon_days, M) daily log-return shocks of the fixed-model GBM.

    Shock means equal the model's mean daily log returns directly; no
    arithmetic-to-log drift adjustment is applied because the means are
    estimated from log returns in the first place.
    """
    factor = psd_factor(model.cov)
    mu = model.mu
    horizon = config.horizon_days
    for ss in _run_seed_sequences(config.seed, config.n_runs):
        rng = np.random.Generator(np.random.PCG64(ss))
        eps = rng.standard_normal((horizon, mu.shape[0]))
        yield eps @ factor.T + mu


def _gbm_report(weights, shock_iter, config: SimConfig) -> SimReport:
    w = np.asarray(weights, dtype=float)
    barrier = config.barrier
    failures = 0
    pooled = np.empty((config.n_runs, config.horizon_days))
    for k, shocks in enumerate(shock_iter):
        ratios = np.exp(np.cumsum(shocks, axis=0)) @ w
        if np.any(ratios < barrier):
            failures += 1
        pooled[k] = shocks @ w
    p = failures / config.n_runs
    vol, semidev = _annualize_series(pooled.ravel())
    return SimReport(
        failure_probability=p,
        stderr=math.sqrt(p * (1.0 - p) / config.n_runs),
        annual_volatility=vol,
        annual_semideviation=semidev,
        n_runs=config.n_runs,
        mode="gbm",
        seed=config.seed,
        gamma=config.gamma,
        theta=config.theta,
        horizon_days=config.horizon_days,
    )


def simulate_gbm(weights, model: RiskModel, config: SimConfig) -> SimReport:
    """Failure probability under correlated GBM from one fixed risk model."""
    w = _weights_for(model, weights)
    return _gbm_report(w, iter_gbm_runs(model, config), config)


def simulate_gbm_resampled(
    weights,
    table: PriceTable,
    config: SimConfig,
    estimation_days: int = 200,
) -> SimReport:
    """GBM failure probability with per-run parameter resampling.

    Every run samples a fresh ``estimation_days`` window of history,
    estimates mean and covariance from it, and simulates its own path from
    those parameters. This propagates parameter uncertainty into the
    failure estimate; use :func:`simulate_gbm` for a fixed model.
    """
    w = _weights_for(table, weights)
    if estimation_days < 2:
        raise DomainError("estimation_days must be >= 2")
    if table.n_dates < estimation_days + 1:
        raise InsufficientDataError(
            f"history spans {table.n_dates} dates; need >= {estimation_days + 1}"
        )
    log_ret = np.diff(np.log(table.prices), axis=0)
    horizon = config.horizon_days

    def runs() -> Iterator[np.ndarray]:
        for ss in _run_seed_sequences(config.seed, config.n_runs):
            rng = np.random.Generator(np.random.PCG64(ss))
            start_date, _ = sample_window(table, estimation_days, rng)
            s = table.index_of(start_date)
            window = log_ret[s : s + estimation_days]
            mu = window.mean(axis=0)
            dev = window - mu
            cov = dev.T @ dev / (estimation_days - 1)
            factor = psd_factor(cov)
            eps = rng.standard_normal((horizon, mu.shape[0]))
            yield eps @ factor.T + mu

    return _gbm_report(w, runs(), config)


def annualized_metrics(weights, returns: ReturnMatrix) -> tuple[float, float]:
    """(annual volatility, annual semideviation) of the portfolio series.

    The portfolio's daily return is the weighted sum of per-asset daily log
    returns; volatility uses the T-1 divisor, semideviation the T divisor,
    both scaled by sqrt(365).
    """
    if returns.n_obs < 2:
        raise InsufficientDataError("need at least 2 return observations")
    w = np.asarray(weights, dtype=float)
    if w.shape != (returns.n_assets,):
        raise DomainError("weights length does not match return matrix width")
    return _annualize_series(returns.returns @ w)
