"""Price ingestion, return computation, and risk-model estimation.

Conventions used throughout the package:

* returns are daily **log** returns,
* annualization uses sqrt(365) (crypto trades every calendar day),
* covariance uses the unbiased T-1 divisor, semicovariance the T divisor
  (it estimates an expectation of a clipped product),
* missing data is handled by intersection alignment, never by imputation.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CoverageError,
    DomainError,
    InsufficientDataError,
    ParseError,
)

DAYS_PER_YEAR = 365

PRICES_HEADER = ["date", "symbol", "close_usd"]


def _freeze(arr) -> np.ndarray:
    # Copy so freezing never flips writability on a caller-owned buffer.
    arr = np.array(arr, dtype=float, order="C")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PriceTable:
    """Aligned daily USD close prices, one row per date, one column per symbol.

    ``dense`` tables (the default, produced by intersection alignment) have
    every cell populated with a positive finite price. Union-aligned tables
    (``dense=False``) may carry NaN where a symbol has no quote; they exist
    only to feed per-date coverage filtering in rolling backtests.
    """

    dates: tuple[dt.date, ...]
    symbols: tuple[str, ...]
    prices: np.ndarray
    dense: bool = True

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "symbols", tuple(str(s) for s in self.symbols))
        prices = np.asarray(self.prices, dtype=float)
        if prices.shape != (len(self.dates), len(self.symbols)):
            raise DomainError(
                f"price matrix shape {prices.shape} does not match "
                f"{len(self.dates)} dates x {len(self.symbols)} symbols"
            )
        for a, b in zip(self.dates, self.dates[1:]):
            if a >= b:
                raise DomainError(f"dates not strictly increasing at {a} -> {b}")
        present = np.isfinite(prices)
        if self.dense and not present.all():
            raise DomainError("dense price table has missing cells")
        if np.any(prices[present] <= 0.0):
            raise DomainError("prices must be strictly positive")
        object.__setattr__(self, "prices", _freeze(prices))

    @property
    def n_dates(self) -> int:
        return len(self.dates)

    def index_of(self, date: dt.date) -> int:
        lookup = self._date_index()
        try:
            return lookup[date]
        except KeyError:
            raise CoverageError(f"date {date} not in price table") from None

    def _date_index(self) -> dict[dt.date, int]:
        # Cached on first use; the instance is otherwise immutable.
        cache = self.__dict__.get("_idx")
        if cache is None:
            cache = {d: i for i, d in enumerate(self.dates)}
            self.__dict__["_idx"] = cache
        return cache

    def window(self, start: dt.date | None = None, end: dt.date | None = None) -> "PriceTable":
        """Sub-table restricted to dates in [start, end] (inclusive)."""
        rows = [
            i
            for i, d in enumerate(self.dates)
            if (start is None or d >= start) and (end is None or d <= end)
        ]
        if not rows:
            raise InsufficientDataError(f"no dates in [{start}, {end}]")
        return PriceTable(
            dates=tuple(self.dates[i] for i in rows),
            symbols=self.symbols,
            prices=self.prices[rows, :],
            dense=self.dense,
        )

    def select(self, symbols: Sequence[str]) -> "PriceTable":
        """Sub-table restricted to the given symbols, in the given order."""
        missing = [s for s in symbols if s not in self.symbols]
        if missing:
            raise CoverageError(f"symbols not in price table: {', '.join(missing)}")
        cols = [self.symbols.index(s) for s in symbols]
        return PriceTable(
            dates=self.dates,
            symbols=tuple(symbols),
            prices=self.prices[:, cols],
            dense=self.dense,
        )

    def tail(self, n_dates: int) -> "PriceTable":
        if n_dates < 1 or n_dates > self.n_dates:
            raise InsufficientDataError(
                f"cannot take trailing {n_dates} dates from a table of {self.n_dates}"
            )
        return PriceTable(
            dates=self.dates[-n_dates:],
            symbols=self.symbols,
            prices=self.prices[-n_dates:, :],
            dense=self.dense,
        )


@dataclass(frozen=True)
class ReturnMatrix:
    """Daily log returns over consecutive dates of a price-table window."""

    symbols: tuple[str, ...]
    returns: np.ndarray  # (T, M)
    window: tuple[dt.date, dt.date]

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        returns = np.asarray(self.returns, dtype=float)
        if returns.ndim != 2 or returns.shape[1] != len(self.symbols):
            raise DomainError("return matrix shape does not match symbols")
        if not np.all(np.isfinite(returns)):
            raise DomainError("returns must be finite")
        object.__setattr__(self, "returns", _freeze(returns))

    @property
    def n_obs(self) -> int:
        return self.returns.shape[0]

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]


@dataclass(frozen=True)
class RiskModel:
    """Mean vector, covariance, and semicovariance of daily log returns."""

    symbols: tuple[str, ...]
    mu: np.ndarray
    cov: np.ndarray
    semicov: np.ndarray
    window_days: int
    cov_repaired: bool = False
    semicov_repaired: bool = False

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        object.__setattr__(self, "mu", _freeze(self.mu))
        object.__setattr__(self, "cov", _freeze(self.cov))
        object.__setattr__(self, "semicov", _freeze(self.semicov))

    @property
    def n_assets(self) -> int:
        return self.mu.shape[0]


def load_prices(
    path,
    date_range: tuple[dt.date | None, dt.date | None] | None = None,
    symbols: Sequence[str] | None = None,
    align: str = "intersection",
    min_coverage: float = 0.9,
) -> PriceTable:
    """Read a ``date,symbol,close_usd`` CSV into an aligned PriceTable.

    The table is restricted to dates where every requested symbol has a
    quote (intersection alignment). A symbol covering less than
    ``min_coverage`` of the dates seen in the requested range is rejected
    outright rather than silently shrinking the table.

    ``align="union"`` instead keeps all dates and marks gaps with NaN
    (``dense=False``); rolling backtests use this to drop symbols per date.
    """
    if align not in ("intersection", "union"):
        raise ValueError(f"unknown align mode {align!r}")
    start, end = date_range if date_range is not None else (None, None)

    per_symbol: dict[str, dict[dt.date, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != PRICES_HEADER:
            raise ParseError(
                f"expected header {','.join(PRICES_HEADER)}, got {header}", path=path, line=1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", path=path, line=lineno)
            try:
                date = dt.date.fromisoformat(row[0].strip())
            except ValueError:
                raise ParseError(f"bad date {row[0]!r}", path=path, line=lineno) from None
            symbol = row[1].strip()
            if not symbol:
                raise ParseError("empty symbol", path=path, line=lineno)
            try:
                price = float(row[2])
            except ValueError:
                raise ParseError(f"bad price {row[2]!r}", path=path, line=lineno) from None
            if not np.isfinite(price) or price <= 0.0:
                raise DomainError(f"{path}:{lineno}: non-positive price {price!r} for {symbol} on {date}")
            if start is not None and date < start:
                continue
            if end is not None and date > end:
                continue
            series = per_symbol.setdefault(symbol, {})
            if date in series:
                raise ParseError(f"duplicate row for ({date}, {symbol})", path=path, line=lineno)
            series[date] = price

    if symbols is None:
        wanted = sorted(per_symbol)
    else:
        wanted = list(symbols)
        missing = [s for s in wanted if s not in per_symbol]
        if missing:
            raise CoverageError(
                f"symbol(s) {', '.join(missing)} have no rows in the requested range"
            )
    if not wanted:
        raise ParseError("no data rows in requested range", path=path)

    union_dates: set[dt.date] = set()
    for s in wanted:
        union_dates.update(per_symbol[s])
    n_union = len(union_dates)
    for s in wanted:
        n_have = len(per_symbol[s])
        if n_have == 0:
            raise CoverageError(f"symbol {s} has no overlapping dates")
        if n_have < min_coverage * n_union:
            raise CoverageError(
                f"symbol {s} covers {n_have}/{n_union} dates "
                f"({n_have / n_union:.1%}) below the {min_coverage:.0%} floor"
            )

    if align == "intersection":
        common = set(per_symbol[wanted[0]])
        for s in wanted[1:]:
            common &= set(per_symbol[s])
        if not common:
            empty = min(wanted, key=lambda s: len(per_symbol[s]))
            raise CoverageError(f"symbol {empty} has no dates shared with the others")
        dates = sorted(common)
        dense = True
    else:
        dates = sorted(union_dates)
        dense = False

    matrix = np.full((len(dates), len(wanted)), np.nan)
    for j, s in enumerate(wanted):
        series = per_symbol[s]
        for i, d in enumerate(dates):
            if d in series:
                matrix[i, j] = series[d]
    return PriceTable(dates=tuple(dates), symbols=tuple(wanted), prices=matrix, dense=dense)


def log_returns(
    table: PriceTable,
    window: tuple[dt.date, dt.date] | None = None,
) -> ReturnMatrix:
    """Daily log returns over consecutive dates of ``window`` (default: all)."""
    sub = table if window is None else table.window(window[0], window[1])
    if sub.n_dates < 2:
        raise InsufficientDataError(
            f"window has {sub.n_dates} date(s); at least 2 required for returns"
        )
    if not sub.dense:
        holes = [s for j, s in enumerate(sub.symbols) if not np.all(np.isfinite(sub.prices[:, j]))]
        if holes:
            raise CoverageError(f"missing prices in window for: {', '.join(holes)}")
    rets = np.diff(np.log(sub.prices), axis=0)
    return ReturnMatrix(symbols=sub.symbols, returns=rets, window=(sub.dates[0], sub.dates[-1]))


def _repair_psd(mat: np.ndarray, tol: float) -> tuple[np.ndarray, bool]:
    eigvals, eigvecs = np.linalg.eigh(mat)
    if eigvals.min() >= -tol:
        return mat, False
    clipped = np.clip(eigvals, 0.0, None)
    repaired = (eigvecs * clipped) @ eigvecs.T
    repaired = 0.5 * (repaired + repaired.T)
    return repaired, True


def estimate_risk_model(returns: ReturnMatrix, psd_tol: float = 1e-10) -> RiskModel:
    """Sample mean / covariance (T-1) / semicovariance (T) of a return matrix.

    The semicovariance is the Gram matrix of below-mean deviations,
    S[i,j] = (1/T) * sum_t min(r_it - mu_i, 0) * min(r_jt - mu_j, 0),
    which is PSD by construction. Both matrices get an eigenvalue clip if
    rounding pushes an eigenvalue below ``-psd_tol``.
    """
    r = returns.returns
    t_obs = r.shape[0]
    if t_obs < 2:
        raise InsufficientDataError(f"need at least 2 return observations, got {t_obs}")
    mu = r.mean(axis=0)
    dev = r - mu
    cov = dev.T @ dev / (t_obs - 1)
    downside = np.minimum(dev, 0.0)
    semicov = downside.T @ downside / t_obs
    cov, cov_rep = _repair_psd(cov, psd_tol)
    semicov, semi_rep = _repair_psd(semicov, psd_tol)
    return RiskModel(
        symbols=returns.symbols,
        mu=mu,
        cov=cov,
        semicov=semicov,
        window_days=t_obs,
        cov_repaired=cov_rep,
        semicov_repaired=semi_rep,
    )


def sample_window(
    table: PriceTable,
    length_days: int,
    rng: np.random.Generator,
) -> tuple[dt.date, dt.date]:
    """Uniformly random contiguous window spanning ``length_days`` steps.

    The window covers ``length_days + 1`` consecutive dates; a table with
    exactly that many dates admits a single window.
    """
    if length_days < 1:
        raise DomainError("length_days must be >= 1")
    n_starts = table.n_dates - length_days
    if n_starts < 1:
        raise InsufficientDataError(
            f"table spans {table.n_dates} dates; need >= {length_days + 1}"
        )
    s = int(rng.integers(0, n_starts))
    return table.dates[s], table.dates[s + length_days]


# --- universe configuration ---------------------------------------------


@dataclass(frozen=True)
class UniverseEntry:
    """One token of the candidate universe with its filter attributes."""

    symbol: str
    rank: int | None = None
    cap: float = 0.2
    launch_date: dt.date | None = None
    stablecoin: bool = False
    tag: str | None = None


_BOOL_VALUES = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def load_universe(path) -> list[UniverseEntry]:
    """Parse the plain-text key-value universe config.

    Format: a ``symbols = A, B, C`` line, then per-symbol attributes as
    ``SYM.attr = value`` with attributes rank, cap (default 0.2),
    launch_date (ISO), stablecoin (true/false), tag.
    """
    symbols: list[str] = []
    attrs: dict[str, dict[str, str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError("expected 'key = value'", path=path, line=lineno)
            key, value = (part.strip() for part in line.split("=", 1))
            if key == "symbols":
                symbols = [s for s in value.replace(",", " ").split() if s]
                for s in symbols:
                    attrs.setdefault(s, {})
                continue
            if "." not in key:
                raise ParseError(f"unknown key {key!r}", path=path, line=lineno)
            sym, attr = key.rsplit(".", 1)
            if sym not in attrs:
                raise ParseError(f"attribute for undeclared symbol {sym!r}", path=path, line=lineno)
            if attr not in ("rank", "cap", "launch_date", "stablecoin", "tag"):
                raise ParseError(f"unknown attribute {attr!r}", path=path, line=lineno)
            attrs[sym][attr] = value

    if not symbols:
        raise ParseError("missing 'symbols =' line", path=path)

    entries = []
    for sym in symbols:
        a = attrs[sym]
        try:
            rank = int(a["rank"]) if "rank" in a else None
            cap = float(a.get("cap", 0.2))
            launch = dt.date.fromisoformat(a["launch_date"]) if "launch_date" in a else None
        except ValueError as exc:
            raise ParseError(f"bad value for {sym}: {exc}", path=path) from None
        stable_raw = a.get("stablecoin", "false").lower()
        if stable_raw not in _BOOL_VALUES:
            raise ParseError(f"bad boolean {stable_raw!r} for {sym}.stablecoin", path=path)
        if not 0.0 < cap <= 1.0:
            raise DomainError(f"cap for {sym} must be in (0, 1], got {cap}")
        entries.append(
            UniverseEntry(
                symbol=sym,
                rank=rank,
                cap=cap,
                launch_date=launch,
                stablecoin=_BOOL_VALUES[stable_raw],
                tag=a.get("tag"),
            )
        )
    return entries


def caps_vector(entries: Iterable[UniverseEntry], symbols: Sequence[str]) -> np.ndarray:
    """Cap vector aligned to ``symbols``; unknown symbols get the 0.2 default."""
    by_symbol = {e.symbol: e.cap for e in entries}
    return np.array([by_symbol.get(s, 0.2) for s in symbols], dtype=float)
