"""Command-line interface.

Subcommands: ``optimize``, ``frontier``, ``simulate``, ``rolling``,
``ledger``, ``compare``. Each reads CSV/config inputs, writes CSV/JSON
reports under ``<out>/<subcommand>/<label>/`` together with a
``manifest.json`` recording every parameter, and prints a one-line
summary. Outputs are byte-identical for identical inputs and seed.

Relative input paths are also looked up under ``$COLLATERALOPT_DATA_DIR``
when they do not exist in the working directory.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .backtest import RollingSpec, compare_portfolios, rolling_optimal
from .dss_ledger import (
    CategoryRules,
    build_collateral_series,
    historical_portfolio,
    load_events,
    load_pip_updates,
)
from .errors import CollateralOptError, ParseError
from .market_data import (
    PriceTable,
    caps_vector,
    estimate_risk_model,
    load_prices,
    load_universe,
    log_returns,
)
from .portfolio_opt import (
    Portfolio,
    efficient_frontier,
    solve_min_semivariance,
    solve_min_variance,
)
from .risk_sim import (
    SimConfig,
    simulate_gbm,
    simulate_gbm_resampled,
    simulate_historical,
)

WEIGHTS_HEADER = ["symbol", "weight", "cap"]

math_nan = float("nan")


def _resolve_input(raw: str) -> Path:
    path = Path(raw)
    if not path.is_absolute() and not path.exists():
        base = os.environ.get("COLLATERALOPT_DATA_DIR")
        if base:
            candidate = Path(base) / path
            if candidate.exists():
                return candidate
    return path


def _parse_date(raw: str) -> dt.date:
    try:
        return dt.date.fromisoformat(raw)
    except ValueError:
        raise ParseError(f"bad date {raw!r} (expected YYYY-MM-DD)") from None


def _parse_date_range(raw: str | None):
    if raw is None:
        return None
    if ":" not in raw:
        raise ParseError(f"bad date range {raw!r} (expected START:END)")
    lo, hi = raw.split(":", 1)
    return (_parse_date(lo) if lo else None, _parse_date(hi) if hi else None)


def _cell(value) -> str:
    if isinstance(value, float):
        value = float(value)  # plain repr also for numpy scalars
        if value != value:  # NaN
            return ""
        return repr(value)
    return "" if value is None else str(value)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _out_dir(args, subcommand: str) -> Path:
    label = args.label or time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())
    out = Path(args.out) / subcommand / label
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, out: Path) -> None:
    params = {}
    for key, value in vars(args).items():
        if key in ("func",):
            continue
        if isinstance(value, Path):
            value = str(value)
        params[key] = value
    _write_json(out / "manifest.json", {"package_version": __version__, "parameters": params})


def _load_price_table(args) -> PriceTable:
    date_range = _parse_date_range(getattr(args, "date_range", None))
    symbols = args.symbols.split(",") if getattr(args, "symbols", None) else None
    align = getattr(args, "align", "intersection")
    return load_prices(
        _resolve_input(args.prices), date_range=date_range, symbols=symbols, align=align
    )


def _caps_and_table(args, table: PriceTable):
    """Apply --universe / --caps to a loaded table; returns (table, caps)."""
    if getattr(args, "universe", None):
        entries = load_universe(_resolve_input(args.universe))
        universe_syms = [e.symbol for e in entries if e.symbol in table.symbols]
        if not universe_syms:
            raise CollateralOptError("no universe symbol has price data")
        table = table.select(universe_syms)
        return table, caps_vector(entries, universe_syms)
    return table, np.full(len(table.symbols), args.caps)


def _trailing_returns(table: PriceTable, window: int | None):
    if window is not None:
        table = table.tail(window + 1)
    return log_returns(table)


def _write_weights(path: Path, portfolio: Portfolio) -> None:
    rows = [
        (s, float(w), float(c))
        for s, w, c in zip(portfolio.symbols, portfolio.weights, portfolio.caps)
    ]
    _write_csv(path, WEIGHTS_HEADER, rows)


def _load_weights(path: Path) -> Portfolio:
    symbols, weights, caps = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != WEIGHTS_HEADER:
            raise ParseError(f"expected header {','.join(WEIGHTS_HEADER)}", path=path, line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", path=path, line=lineno)
            symbols.append(row[0].strip())
            try:
                weights.append(float(row[1]))
                caps.append(float(row[2]))
            except ValueError:
                raise ParseError(f"bad number in {row!r}", path=path, line=lineno) from None
    return Portfolio(tuple(symbols), np.array(weights), np.array(caps))


# --- subcommands -----------------------------------------------------------


def cmd_optimize(args) -> int:
    table = _load_price_table(args)
    table, caps = _caps_and_table(args, table)
    returns = _trailing_returns(table, args.window)
    if args.objective == "variance":
        portfolio, sol = solve_min_variance(estimate_risk_model(returns), caps)
    else:
        portfolio, sol = solve_min_semivariance(returns, caps, use_comoment=args.use_comoment)
    out = _out_dir(args, "optimize")
    _write_weights(out / "weights.csv", portfolio)
    report = sol.report()
    report.update(
        {
            "objective_name": args.objective,
            "symbols": list(portfolio.symbols),
            "window_start": returns.window[0].isoformat(),
            "window_end": returns.window[1].isoformat(),
            "n_obs": returns.n_obs,
        }
    )
    _write_json(out / "report.json", report)
    _manifest(args, out)
    print(
        f"optimize: {args.objective} over {len(portfolio.symbols)} assets, "
        f"objective {sol.objective:.6e} -> {out}"
    )
    return 0


def cmd_frontier(args) -> int:
    table = _load_price_table(args)
    table, caps = _caps_and_table(args, table)
    returns = _trailing_returns(table, args.window)
    model = estimate_risk_model(returns)
    points = efficient_frontier(model, caps, args.points, risk_free=args.risk_free)
    out = _out_dir(args, "frontier")
    header = ["target_return", "volatility", "sharpe", "status"] + [
        f"w_{s}" for s in table.symbols
    ]
    rows = []
    for p in points:
        weights = list(p.weights) if p.weights is not None else [math_nan] * len(table.symbols)
        rows.append([p.target_return, p.volatility, p.sharpe, p.status] + weights)
    _write_csv(out / "frontier.csv", header, rows)
    _manifest(args, out)
    n_ok = sum(1 for p in points if p.status == "ok")
    print(f"frontier: {n_ok}/{len(points)} feasible points -> {out}")
    return 0


def cmd_simulate(args) -> int:
    table = _load_price_table(args)
    portfolio = _load_weights(_resolve_input(args.weights))
    sub = table.select(list(portfolio.symbols))
    config = SimConfig(
        gamma=args.gamma,
        theta=args.theta,
        horizon_days=args.horizon,
        n_runs=args.runs,
        seed=args.seed,
        mode=args.mode,
    )
    if args.mode == "historical":
        report = simulate_historical(portfolio.weights, sub, config)
    elif args.gbm_fixed:
        model = estimate_risk_model(_trailing_returns(sub, args.window))
        report = simulate_gbm(portfolio.weights, model, config)
    else:
        report = simulate_gbm_resampled(
            portfolio.weights, sub, config, estimation_days=args.estimation_days
        )
    out = _out_dir(args, "simulate")
    _write_json(out / "report.json", report.as_dict())
    _manifest(args, out)
    print(
        f"simulate: mode={report.mode} p_fail={report.failure_probability:.4f} "
        f"(stderr {report.stderr:.4f}) -> {out}"
    )
    return 0


def cmd_rolling(args) -> int:
    table = _load_price_table(args)
    if getattr(args, "universe", None):
        entries = load_universe(_resolve_input(args.universe))
        universe = [e.symbol for e in entries if e.symbol in table.symbols]
        caps = {e.symbol: e.cap for e in entries}
        spec = RollingSpec(
            window_days=args.window,
            step_days=args.step,
            objective=args.objective,
            caps=caps,
            universe=tuple(universe),
        )
    else:
        spec = RollingSpec(
            window_days=args.window,
            step_days=args.step,
            objective=args.objective,
            caps=args.caps,
        )
    points = rolling_optimal(table, spec)
    universe = list(spec.universe) if spec.universe else list(table.symbols)
    out = _out_dir(args, "rolling")
    header = ["date", "status", "excluded"] + [f"w_{s}" for s in universe]
    rows = []
    for p in points:
        weights = {s: math_nan for s in universe}
        if p.portfolio is not None:
            weights.update(p.portfolio.as_dict())
        rows.append(
            [p.date.isoformat(), p.error or "ok", ";".join(p.excluded)]
            + [weights[s] for s in universe]
        )
    _write_csv(out / "rolling.csv", header, rows)
    _manifest(args, out)
    n_ok = sum(1 for p in points if p.error is None)
    print(f"rolling: {n_ok}/{len(points)} dates solved ({args.objective}) -> {out}")
    return 0


def cmd_ledger(args) -> int:
    events = load_events(_resolve_input(args.events))
    prices = load_prices(_resolve_input(args.prices)) if args.prices else None
    pip = load_pip_updates(_resolve_input(args.pip)) if args.pip else []
    if prices is None:
        raise CollateralOptError("--prices is required to value ERC-20 collateral")
    rules = CategoryRules(lp_visibility_share=args.lp_threshold)
    end_date = _parse_date(args.end_date) if args.end_date else None
    series = build_collateral_series(events, prices, pip, rules=rules, end_date=end_date)
    out = _out_dir(args, "ledger")
    header = ["date"] + series.category_names() + ["total"]
    _write_csv(out / "collateral_series.csv", header, series.category_rows())
    summary = f"ledger: {len(series.dates)} days, {len(series.vault_types)} vault types"
    if args.portfolio_top_k:
        date_range = _parse_date_range(args.range)
        if date_range is not None and (date_range[0] is None or date_range[1] is None):
            raise CollateralOptError("--range for the portfolio needs both endpoints")
        hist = historical_portfolio(series, date_range, top_k=args.portfolio_top_k)
        _write_csv(
            out / "portfolio.csv",
            ["symbol", "weight"],
            [(s, float(w)) for s, w in zip(hist.symbols, hist.weights)],
        )
        summary += f", top-{args.portfolio_top_k} portfolio {'/'.join(hist.symbols)}"
    _manifest(args, out)
    print(summary + f" -> {out}")
    return 0


def cmd_compare(args) -> int:
    table = _load_price_table(args)
    named = []
    for spec in args.portfolio:
        if "=" not in spec:
            raise CollateralOptError(f"--portfolio expects NAME=weights.csv, got {spec!r}")
        name, path = spec.split("=", 1)
        named.append((name, _load_weights(_resolve_input(path))))
    config = SimConfig(
        gamma=args.gamma,
        theta=args.theta,
        horizon_days=args.horizon,
        n_runs=args.runs,
        seed=args.seed,
        mode="historical",
    )
    rows = compare_portfolios(named, table, config, estimation_days=args.estimation_days)
    out = _out_dir(args, "compare")
    _write_csv(
        out / "compare.csv",
        [
            "name",
            "annual_volatility",
            "annual_semideviation",
            "historical_failure_prob",
            "gbm_failure_prob",
            "error",
        ],
        [
            (
                r.name,
                r.annual_volatility,
                r.annual_semideviation,
                r.historical_failure_prob,
                r.gbm_failure_prob,
                r.error,
            )
            for r in rows
        ],
    )
    _manifest(args, out)
    n_ok = sum(1 for r in rows if r.error is None)
    print(f"compare: {n_ok}/{len(rows)} portfolios evaluated -> {out}")
    return 0


# --- parser ----------------------------------------------------------------


def _add_common_output(sp) -> None:
    sp.add_argument("--out", default="out", help="output root directory (default: ./out)")
    sp.add_argument("--label", default=None, help="run label (default: UTC timestamp)")


def _add_prices(sp) -> None:
    sp.add_argument("--prices", required=True, help="prices CSV (date,symbol,close_usd)")
    sp.add_argument("--date-range", dest="date_range", default=None, help="START:END (ISO dates)")
    sp.add_argument("--symbols", default=None, help="comma-separated symbol subset")


def _add_caps_universe(sp) -> None:
    sp.add_argument("--caps", type=float, default=0.2, help="uniform per-asset cap (default 0.2)")
    sp.add_argument("--universe", default=None, help="universe config with per-symbol caps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="collateralopt",
        description="Risk-minimal collateral portfolios and failure-probability simulation",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("optimize", help="solve a minimum-risk portfolio")
    _add_prices(sp)
    _add_caps_universe(sp)
    sp.add_argument("--window", type=int, default=None, help="trailing return days (default: all)")
    sp.add_argument(
        "--objective", choices=("variance", "semivariance"), default="variance"
    )
    sp.add_argument(
        "--use-comoment",
        action="store_true",
        help="semivariance fast path via the semicovariance matrix (approximate)",
    )
    _add_common_output(sp)
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("frontier", help="trace the efficient frontier")
    _add_prices(sp)
    _add_caps_universe(sp)
    sp.add_argument("--window", type=int, default=None)
    sp.add_argument("--points", type=int, default=20)
    sp.add_argument("--risk-free", dest="risk_free", type=float, default=0.0)
    _add_common_output(sp)
    sp.set_defaults(func=cmd_frontier)

    sp = sub.add_parser("simulate", help="estimate failure probability")
    _add_prices(sp)
    sp.add_argument("--weights", required=True, help="weights CSV (symbol,weight,cap)")
    sp.add_argument("--mode", choices=("historical", "gbm"), default="historical")
    sp.add_argument("--gamma", type=float, default=2.0)
    sp.add_argument("--theta", type=float, default=1.5)
    sp.add_argument("--runs", type=int, default=10_000)
    sp.add_argument("--horizon", type=int, default=365)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument(
        "--estimation-days",
        dest="estimation_days",
        type=int,
        default=200,
        help="per-run GBM estimation window (resampled mode)",
    )
    sp.add_argument(
        "--gbm-fixed",
        dest="gbm_fixed",
        action="store_true",
        help="use one fixed risk model (from --window) instead of per-run resampling",
    )
    sp.add_argument("--window", type=int, default=None)
    _add_common_output(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("rolling", help="rolling-window optimal portfolios")
    _add_prices(sp)
    sp.add_argument("--align", choices=("intersection", "union"), default="intersection")
    _add_caps_universe(sp)
    sp.add_argument("--window", type=int, required=True)
    sp.add_argument("--step", type=int, default=1)
    sp.add_argument(
        "--objective", choices=("variance", "semivariance"), default="semivariance"
    )
    _add_common_output(sp)
    sp.set_defaults(func=cmd_rolling)

    sp = sub.add_parser("ledger", help="rebuild collateral series from vault events")
    sp.add_argument("--events", required=True, help="events CSV")
    sp.add_argument("--prices", required=True, help="prices CSV for ERC-20 valuation")
    sp.add_argument("--pip", default=None, help="oracle valuation CSV for RWA/LP")
    sp.add_argument("--end-date", dest="end_date", default=None, help="extend series to this date")
    sp.add_argument(
        "--lp-threshold",
        dest="lp_threshold",
        type=float,
        default=0.01,
        help="fold LP into minor below this peak share",
    )
    sp.add_argument(
        "--portfolio-top-k",
        dest="portfolio_top_k",
        type=int,
        default=None,
        help="also emit the average top-k crypto portfolio",
    )
    sp.add_argument("--range", default=None, help="START:END averaging range for the portfolio")
    _add_common_output(sp)
    sp.set_defaults(func=cmd_ledger)

    sp = sub.add_parser("compare", help="compare portfolios on risk metrics")
    _add_prices(sp)
    sp.add_argument(
        "--portfolio",
        action="append",
        required=True,
        metavar="NAME=WEIGHTS.CSV",
        help="named portfolio (repeatable)",
    )
    sp.add_argument("--gamma", type=float, default=2.0)
    sp.add_argument("--theta", type=float, default=1.5)
    sp.add_argument("--runs", type=int, default=10_000)
    sp.add_argument("--horizon", type=int, default=365)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--estimation-days", dest="estimation_days", type=int, default=200)
    _add_common_output(sp)
    sp.set_defaults(func=cmd_compare)

    return parser


def cli_main(argv=None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors exit with code 2
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CollateralOptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    return cli_main(argv)
