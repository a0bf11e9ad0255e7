"""Reconstruction of historical collateral from vault-event exports.

Inputs are pre-decoded CSV exports: one stream of signed token deltas per
deposit/withdrawal (one row per Join-contract event) and one stream of
oracle "price" updates used to value RWA and LP vault types. Replaying the
deltas gives daily token balances per vault type; valuation then yields
USD series per vault type, per ERC-20 token, and per category (ETH, BTC,
minor ERC-20, LP, PSM, RWA).

Daily snapshot convention: a date's balance includes every event
timestamped before midnight UTC of the following day, valued at that
date's close.
"""

from __future__ import annotations

import csv
import datetime as dt
import warnings
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation, localcontext

import numpy as np

from .errors import (
    CoverageError,
    DomainError,
    EmptyPortfolioError,
    InsufficientDataError,
    ParseError,
)
from .market_data import PriceTable

EVENTS_HEADER = ["block_number", "timestamp", "vault_type", "token_symbol", "delta_tokens"]
PIP_HEADER = ["block_number", "timestamp", "vault_type", "value_usd"]

_BALANCE_TOL = Decimal("1e-9")


@dataclass(frozen=True)
class VaultEvent:
    """One decoded collateral deposit (positive) or withdrawal (negative)."""

    block_number: int
    timestamp: dt.datetime
    vault_type: str
    token_symbol: str
    delta_tokens: Decimal


@dataclass(frozen=True)
class PipUpdate:
    """One oracle valuation update for an RWA or LP vault type."""

    block_number: int
    timestamp: dt.datetime
    vault_type: str
    value_usd: Decimal


@dataclass(frozen=True)
class CategoryRules:
    """How vault types map onto the reporting categories."""

    eth_symbols: frozenset = frozenset({"ETH", "WETH"})
    btc_symbols: frozenset = frozenset({"WBTC", "RENBTC", "TBTC"})
    lp_markers: tuple[str, ...] = ("UNIV2", "GUNIV3", "CRVV1")
    lp_visibility_share: float = 0.01

    def vault_class(self, vault_type: str, token_symbol: str) -> str:
        vt = vault_type.upper()
        if vt.startswith("RWA"):
            return "RWA"
        if vt.startswith("PSM"):
            return "PSM"
        token = token_symbol.upper()
        if any(token.startswith(m) or vt.startswith(m) for m in self.lp_markers):
            return "LP"
        return "ERC20"

    def token_category(self, token_symbol: str) -> str:
        token = token_symbol.upper()
        if token in self.eth_symbols:
            return "ETH"
        if token in self.btc_symbols:
            return "BTC"
        return "minor"


CATEGORY_ORDER = ("ETH", "BTC", "minor", "LP", "PSM", "RWA")


@dataclass(frozen=True)
class CollateralSeries:
    """Daily balances, USD values, and category totals of the collateral."""

    dates: tuple[dt.date, ...]
    vault_types: tuple[str, ...]
    vault_tokens: tuple[str, ...]
    vault_classes: tuple[str, ...]
    balances: np.ndarray  # (T, V) tokens
    values_usd: np.ndarray  # (T, V)
    token_values: dict[str, np.ndarray]  # ERC-20 tokens only
    categories: dict[str, np.ndarray]
    total_usd: np.ndarray
    lp_folded: bool = False

    def category_rows(self):
        """Rows of (date, per-category value..., total) for CSV output."""
        names = [c for c in CATEGORY_ORDER if c in self.categories]
        for i, d in enumerate(self.dates):
            yield [d.isoformat()] + [self.categories[c][i] for c in names] + [self.total_usd[i]]

    def category_names(self) -> list[str]:
        return [c for c in CATEGORY_ORDER if c in self.categories]


@dataclass(frozen=True)
class HistoricalPortfolio:
    """Average crypto-collateral composition over a date range."""

    as_of: tuple[dt.date, dt.date]
    symbols: tuple[str, ...]
    weights: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=float)
        if abs(w.sum() - 1.0) > 1e-8 or np.any(w < 0.0):
            raise DomainError("historical portfolio weights must be >= 0 and sum to 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "symbols", tuple(self.symbols))


def _parse_timestamp(raw: str, path, lineno) -> dt.datetime:
    try:
        ts = dt.datetime.fromisoformat(raw.strip().replace("Z", "+00:00"))
    except ValueError:
        raise ParseError(f"bad timestamp {raw!r}", path=path, line=lineno) from None
    if ts.tzinfo is None:
        raise ParseError(f"timestamp {raw!r} lacks a UTC offset", path=path, line=lineno)
    return ts.astimezone(dt.timezone.utc)


def load_events(path, known_types: set[str] | None = None) -> list[VaultEvent]:
    """Parse and sort the vault-event export.

    Rows with a zero delta are dropped with a warning. Events are ordered
    by block number, preserving file order within a block. Vault types not
    in ``known_types`` (when given) are flagged but retained.
    """
    events: list[VaultEvent] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != EVENTS_HEADER:
            raise ParseError(
                f"expected header {','.join(EVENTS_HEADER)}, got {header}", path=path, line=1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 5:
                raise ParseError(f"expected 5 fields, got {len(row)}", path=path, line=lineno)
            try:
                block = int(row[0])
            except ValueError:
                raise ParseError(f"bad block number {row[0]!r}", path=path, line=lineno) from None
            ts = _parse_timestamp(row[1], path, lineno)
            vault_type = row[2].strip()
            token = row[3].strip()
            if not vault_type or not token:
                raise ParseError("empty vault_type or token_symbol", path=path, line=lineno)
            try:
                delta = Decimal(row[4].strip())
            except InvalidOperation:
                raise ParseError(f"bad delta {row[4]!r}", path=path, line=lineno) from None
            if delta == 0:
                warnings.warn(f"{path}:{lineno}: zero-delta event for {vault_type} dropped")
                continue
            events.append(VaultEvent(block, ts, vault_type, token, delta))

    events.sort(key=lambda e: e.block_number)  # stable: keeps intra-block file order
    last_ts: dict[str, dt.datetime] = {}
    for e in events:
        prev = last_ts.get(e.vault_type)
        if prev is not None and e.timestamp < prev:
            raise DomainError(
                f"timestamps regress for {e.vault_type} at block {e.block_number}"
            )
        last_ts[e.vault_type] = e.timestamp
    if known_types is not None:
        unknown = sorted({e.vault_type for e in events} - set(known_types))
        if unknown:
            warnings.warn(f"unknown vault types retained: {', '.join(unknown)}")
    return events


def load_pip_updates(path) -> list[PipUpdate]:
    """Parse the oracle valuation stream for RWA/LP vault types."""
    updates: list[PipUpdate] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != PIP_HEADER:
            raise ParseError(
                f"expected header {','.join(PIP_HEADER)}, got {header}", path=path, line=1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", path=path, line=lineno)
            try:
                block = int(row[0])
            except ValueError:
                raise ParseError(f"bad block number {row[0]!r}", path=path, line=lineno) from None
            ts = _parse_timestamp(row[1], path, lineno)
            try:
                value = Decimal(row[3].strip())
            except InvalidOperation:
                raise ParseError(f"bad value {row[3]!r}", path=path, line=lineno) from None
            if value < 0:
                raise DomainError(f"{path}:{lineno}: negative valuation {value}")
            updates.append(PipUpdate(block, ts, row[2].strip(), value))
    updates.sort(key=lambda u: u.block_number)
    return updates


def _event_date(ts: dt.datetime) -> dt.date:
    return ts.astimezone(dt.timezone.utc).date()


def build_collateral_series(
    events: list[VaultEvent],
    prices: PriceTable,
    pip_updates: list[PipUpdate] | None = None,
    rules: CategoryRules | None = None,
    end_date: dt.date | None = None,
) -> CollateralSeries:
    """Replay sorted events into daily balances and USD category totals.

    ERC-20 vault types are valued at the day's close price, PSM holdings at
    par, and RWA/LP types at their balance times the latest oracle value at
    or before the day. LP is folded into "minor" when its peak share of the
    total stays below ``rules.lp_visibility_share``.
    """
    if not events:
        raise InsufficientDataError("no events to replay")
    rules = rules or CategoryRules()
    pip_updates = pip_updates or []

    vault_types = sorted({e.vault_type for e in events})
    vt_index = {v: i for i, v in enumerate(vault_types)}
    vault_tokens = {}
    for e in events:
        prev = vault_tokens.setdefault(e.vault_type, e.token_symbol)
        if prev != e.token_symbol:
            raise DomainError(
                f"vault type {e.vault_type} mixes tokens {prev} and {e.token_symbol}"
            )

    first = min(_event_date(e.timestamp) for e in events)
    last = max(_event_date(e.timestamp) for e in events)
    if end_date is not None and end_date > last:
        last = end_date
    dates = [first + dt.timedelta(days=i) for i in range((last - first).days + 1)]
    n_days, n_vaults = len(dates), len(vault_types)
    day_index = {d: i for i, d in enumerate(dates)}

    balances = np.zeros((n_days, n_vaults))
    with localcontext() as ctx:
        ctx.prec = 50
        for v, vt in enumerate(vault_types):
            running = Decimal(0)
            daily: dict[int, Decimal] = {}
            for e in events:
                if e.vault_type != vt:
                    continue
                running += e.delta_tokens
                if running < -_BALANCE_TOL:
                    raise DomainError(
                        f"negative balance {running} for {vault_type_str(e)} "
                        f"at block {e.block_number}"
                    )
                daily[day_index[_event_date(e.timestamp)]] = running
            level = Decimal(0)
            for i in range(n_days):
                if i in daily:
                    level = daily[i]
                balances[i, v] = float(level)

    # Oracle valuations per vault type: (day index, value) steps.
    pip_by_vault: dict[str, list[tuple[int, float]]] = {}
    for u in pip_updates:
        d = _event_date(u.timestamp)
        if d < first or d > last:
            continue
        pip_by_vault.setdefault(u.vault_type, []).append((day_index[d], float(u.value_usd)))

    classes = [rules.vault_class(vt, vault_tokens[vt]) for vt in vault_types]
    values = np.zeros((n_days, n_vaults))
    for v, vt in enumerate(vault_types):
        token = vault_tokens[vt]
        bal = balances[:, v]
        cls = classes[v]
        if cls == "PSM":
            values[:, v] = bal
        elif cls in ("RWA", "LP"):
            steps = sorted(pip_by_vault.get(vt, []))
            level = np.full(n_days, np.nan)
            cur = np.nan
            j = 0
            for i in range(n_days):
                while j < len(steps) and steps[j][0] <= i:
                    cur = steps[j][1]
                    j += 1
                level[i] = cur
            missing = np.isnan(level) & (bal != 0.0)
            if missing.any():
                bad = dates[int(np.nonzero(missing)[0][0])]
                raise CoverageError(f"no oracle valuation for {vt} on {bad}")
            level[np.isnan(level)] = 0.0
            values[:, v] = bal * level
        else:  # ERC20
            held = bal != 0.0
            px = np.zeros(n_days)
            if held.any():
                if token not in prices.symbols:
                    raise CoverageError(f"no price series for {token} (vault {vt})")
                col = prices.symbols.index(token)
                lookup = {d: i for i, d in enumerate(prices.dates)}
                for i in np.nonzero(held)[0]:
                    row = lookup.get(dates[i])
                    if row is None or not np.isfinite(prices.prices[row, col]):
                        raise CoverageError(f"no price for {token} on {dates[i]}")
                    px[i] = prices.prices[row, col]
            values[:, v] = bal * px

    categories = {}
    token_values: dict[str, np.ndarray] = {}
    for v, vt in enumerate(vault_types):
        cls = classes[v]
        if cls == "ERC20":
            cat = rules.token_category(vault_tokens[vt])
            tok = vault_tokens[vt]
            token_values[tok] = token_values.get(tok, 0.0) + values[:, v]
        else:
            cat = cls
        categories[cat] = categories.get(cat, 0.0) + values[:, v]

    lp_folded = False
    if "LP" in categories:
        total = sum(categories.values())
        with np.errstate(invalid="ignore", divide="ignore"):
            share = np.where(total > 0.0, categories["LP"] / np.where(total > 0, total, 1.0), 0.0)
        if float(np.max(share, initial=0.0)) < rules.lp_visibility_share:
            categories["minor"] = categories.get("minor", 0.0) + categories.pop("LP")
            lp_folded = True

    total_usd = sum(categories.values())
    grand = values.sum(axis=1)
    scale = np.maximum(np.abs(grand), 1.0)
    if np.max(np.abs(total_usd - grand) / scale) > 1e-6:
        raise DomainError("category totals fail to close against the grand total")

    return CollateralSeries(
        dates=tuple(dates),
        vault_types=tuple(vault_types),
        vault_tokens=tuple(vault_tokens[vt] for vt in vault_types),
        vault_classes=tuple(classes),
        balances=balances,
        values_usd=values,
        token_values=token_values,
        categories={k: np.asarray(v) for k, v in categories.items()},
        total_usd=np.asarray(total_usd),
        lp_folded=lp_folded,
    )


def vault_type_str(e: VaultEvent) -> str:
    return f"{e.vault_type} ({e.token_symbol})"


def historical_portfolio(
    series: CollateralSeries,
    date_range: tuple[dt.date, dt.date] | None = None,
    top_k: int = 6,
) -> HistoricalPortfolio:
    """Average ERC-20 USD shares over a range, reduced to the top_k tokens.

    Shares are averaged with equal weight per day; days with zero crypto
    collateral are skipped. The kept tokens' average shares are
    renormalized to sum to 1.
    """
    if top_k < 1:
        raise DomainError("top_k must be >= 1")
    start, end = date_range if date_range is not None else (series.dates[0], series.dates[-1])
    mask = np.array([start <= d <= end for d in series.dates])
    if not mask.any():
        raise InsufficientDataError(f"series has no dates in [{start}, {end}]")
    if not series.token_values:
        raise EmptyPortfolioError("series contains no ERC-20 collateral")

    tokens = sorted(series.token_values)
    stack = np.stack([series.token_values[t][mask] for t in tokens], axis=1)
    denom = stack.sum(axis=1)
    live = denom > 0.0
    if not live.any():
        raise EmptyPortfolioError(f"no crypto collateral in [{start}, {end}]")
    shares = stack[live] / denom[live, None]
    avg = shares.mean(axis=0)

    order = sorted(range(len(tokens)), key=lambda i: (-avg[i], tokens[i]))[:top_k]
    kept = [tokens[i] for i in order]
    w = np.array([avg[i] for i in order])
    total = w.sum()
    if total <= 0.0:
        raise EmptyPortfolioError("selected tokens carry zero average share")
    return HistoricalPortfolio(as_of=(start, end), symbols=tuple(kept), weights=w / total)
