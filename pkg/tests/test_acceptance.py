"""Acceptance suite: one test per release criterion, at its stated tolerance.

Run with ``pytest -s -v tests/test_acceptance.py`` to see one pass/fail
line per criterion. The two reference-dataset checks need the environment
variable ``COLLATERALOPT_REFERENCE_DATA`` to point at a directory holding
``prices.csv``, ``universe.cfg``, ``events.csv`` and ``pip.csv``; they are
skipped when it is unset.
"""

import csv
import datetime as dt
import json
import math
import os
import time
from decimal import Decimal
from pathlib import Path

import numpy as np
import pytest

from collateralopt.backtest import RollingSpec, compare_portfolios, rolling_optimal
from collateralopt.cli import cli_main
from collateralopt.dss_ledger import (
    PipUpdate,
    VaultEvent,
    build_collateral_series,
    historical_portfolio,
)
from collateralopt.market_data import (
    ReturnMatrix,
    RiskModel,
    caps_vector,
    estimate_risk_model,
    load_prices,
    load_universe,
    log_returns,
)
from collateralopt.portfolio_opt import (
    filter_universe,
    min_variance,
    portfolio_semivariance,
    solve_min_semivariance,
    solve_min_variance,
    UniverseFilter,
)
from collateralopt.risk_sim import SimConfig, iter_gbm_runs, simulate_gbm, simulate_historical

from conftest import D0, gbm_prices, make_table, write_prices_csv

UTC = dt.timezone.utc


def _pass(line):
    print(f"\nACCEPTANCE PASS — {line}")


def model_from_cov(cov, mu=None):
    cov = np.asarray(cov, dtype=float)
    m = cov.shape[0]
    return RiskModel(
        symbols=tuple(f"T{i}" for i in range(m)),
        mu=np.zeros(m) if mu is None else np.asarray(mu, dtype=float),
        cov=cov,
        semicov=np.zeros((m, m)),
        window_days=250,
    )


def returns_matrix(r):
    return ReturnMatrix(
        symbols=tuple(f"T{i}" for i in range(r.shape[1])),
        returns=r,
        window=(D0, D0 + dt.timedelta(days=r.shape[0])),
    )


def grid_simplex(m, caps, step=0.01):
    n = round(1.0 / step)
    cap_steps = np.floor(np.asarray(caps) * n + 1e-9).astype(int)
    axes = [np.arange(0, cap_steps[i] + 1) for i in range(m - 1)]
    grids = np.meshgrid(*axes, indexing="ij")
    last = n - sum(grids)
    mask = (last >= 0) & (last <= cap_steps[-1])
    pts = np.stack([g[mask] for g in grids] + [last[mask]], axis=1)
    return pts / n


def random_cov(rng, m, vol_lo=0.01, vol_hi=0.08):
    vols = rng.uniform(vol_lo, vol_hi, m)
    a = rng.normal(size=(m, m))
    corr = a @ a.T
    d = np.sqrt(np.diag(corr))
    corr = corr / d / d[:, None]
    return corr * vols * vols[:, None]


def test_qp_grid_oracle_equivalence():
    """100 random instances, M in {2,3,4}, caps from {0.2,0.5,1.0}:
    solver objective matches a 0.01-step exhaustive grid within 1e-4."""
    rng = np.random.default_rng(20240601)
    t0 = time.monotonic()
    for trial in range(100):
        m = int(rng.integers(2, 5))
        while True:
            caps = rng.choice([0.2, 0.5, 1.0], size=m)
            if caps.sum() >= 1.0:
                break
        cov = random_cov(rng, m)
        _, sol = solve_min_variance(model_from_cov(cov), caps)
        pts = grid_simplex(m, caps)
        grid_best = float(np.einsum("ij,jk,ik->i", pts, cov, pts).min())
        assert sol.objective <= grid_best + 1e-12, f"trial {trial}: solver above grid"
        assert abs(sol.objective - grid_best) <= 1e-4, f"trial {trial}"
    elapsed = time.monotonic() - t0
    assert elapsed < 30.0, f"grid oracle suite took {elapsed:.1f}s"
    _pass(f"QP grid-oracle equivalence (100 instances, {elapsed:.1f}s < 30s)")


def test_two_asset_closed_form():
    """Uncorrelated variances (1, 4) yield weights (0.8, 0.2) within 1e-6."""
    p = min_variance(model_from_cov(np.diag([1.0, 4.0])), np.ones(2))
    assert np.max(np.abs(p.weights - [0.8, 0.2])) <= 1e-6
    _pass("closed-form 2-asset weights (0.8, 0.2) within 1e-6")


def test_semivariance_dominance():
    """1,000 random (T=250, M=6) matrices: the semivariance optimum never
    exceeds the T-divisor variance at its own weights, nor the semivariance
    of the min-variance weights (+1e-10)."""
    rng = np.random.default_rng(7_777)
    caps = np.full(6, 0.2)
    for trial in range(1000):
        r = rng.normal(0.001, 0.03, size=(250, 6)) + rng.normal(
            0.0, 0.015, size=(250, 1)
        )  # common factor keeps correlations realistic
        rm = returns_matrix(r)
        p_sem, sol = solve_min_semivariance(rm, caps)
        rp = r @ p_sem.weights
        var_t = float(np.mean((rp - rp.mean()) ** 2))
        assert sol.objective <= var_t + 1e-15, f"trial {trial}: above T-divisor variance"
        p_var = min_variance(estimate_risk_model(rm), caps)
        sem_at_var = portfolio_semivariance(p_var.weights, rm)
        assert sol.objective <= sem_at_var + 1e-10, f"trial {trial}: not optimal"
    _pass("semivariance dominance on 1,000 random instances")


def _norm_cdf(z):
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def test_gbm_first_passage_oracle():
    """Single-asset GBM failure probability vs the analytic first-passage
    probability of drifted Brownian motion to ln(theta/gamma), within 3 MC
    standard errors at 10,000 runs, in under 10 seconds."""
    # Drift-dominated parameters keep the daily-monitoring discretization
    # gap well inside the Monte Carlo tolerance.
    mu_d, sg_d = -0.0022, 0.013
    config = SimConfig(gamma=2.0, theta=1.5, horizon_days=365, n_runs=10_000, seed=7, mode="gbm")
    barrier = math.log(config.theta / config.gamma)
    sd = sg_d * math.sqrt(config.horizon_days)
    p_analytic = _norm_cdf((barrier - mu_d * config.horizon_days) / sd) + math.exp(
        2.0 * mu_d * barrier / sg_d**2
    ) * _norm_cdf((barrier + mu_d * config.horizon_days) / sd)

    model = model_from_cov(np.array([[sg_d**2]]), np.array([mu_d]))
    t0 = time.monotonic()
    report = simulate_gbm([1.0], model, config)
    elapsed = time.monotonic() - t0
    se = math.sqrt(p_analytic * (1.0 - p_analytic) / config.n_runs)
    dev = abs(report.failure_probability - p_analytic)
    assert dev <= 3.0 * se, f"|{report.failure_probability:.5f} - {p_analytic:.5f}| > 3se"
    assert elapsed < 10.0, f"first-passage run took {elapsed:.1f}s"
    _pass(
        f"GBM first-passage oracle (dev {dev / se:.2f} se, {elapsed:.1f}s < 10s)"
    )


def test_gbm_correlation_preservation():
    """3-asset GBM reproduces the input correlation matrix within 0.03."""
    corr = np.array([[1.0, 0.8, 0.2], [0.8, 1.0, 0.5], [0.2, 0.5, 1.0]])
    vols = np.array([0.02, 0.03, 0.04])
    model = model_from_cov(corr * vols * vols[:, None])
    config = SimConfig(seed=11, n_runs=10_000, horizon_days=30, mode="gbm")
    sx = np.zeros(3)
    sxx = np.zeros((3, 3))
    n = 0
    for shocks in iter_gbm_runs(model, config):
        sx += shocks.sum(axis=0)
        sxx += shocks.T @ shocks
        n += shocks.shape[0]
    mean = sx / n
    cov_hat = sxx / n - np.outer(mean, mean)
    d = np.sqrt(np.diag(cov_hat))
    corr_hat = cov_hat / d / d[:, None]
    worst = float(np.max(np.abs(corr_hat - corr)))
    assert worst <= 0.03
    _pass(f"GBM correlation preservation (max deviation {worst:.4f} <= 0.03)")


def test_simulation_monotonicity(six_asset_table):
    """On fixed sampled paths (same seed), failure probability is
    non-decreasing in theta and non-increasing in gamma — exactly."""
    w = np.full(6, 1 / 6)
    base = dict(seed=21, n_runs=500, horizon_days=200)
    thetas = (1.05, 1.2, 1.4, 1.6, 1.9)
    p_theta = [
        simulate_historical(w, six_asset_table, SimConfig(theta=t, **base)).failure_probability
        for t in thetas
    ]
    assert all(a <= b for a, b in zip(p_theta, p_theta[1:])), p_theta
    gammas = (1.6, 2.0, 2.5, 4.0, 8.0)
    p_gamma = [
        simulate_historical(w, six_asset_table, SimConfig(gamma=g, **base)).failure_probability
        for g in gammas
    ]
    assert all(a >= b for a, b in zip(p_gamma, p_gamma[1:])), p_gamma
    _pass("simulation monotonicity in theta and gamma (exact on shared paths)")


@pytest.fixture()
def cli_inputs(tmp_path):
    root = tmp_path / "inputs"
    root.mkdir()
    symbols = ("WBTC", "ETH", "LINK", "BAT", "ZRX", "MATIC")
    vols = [0.030, 0.042, 0.055, 0.050, 0.060, 0.065]
    corr = np.full((6, 6), 0.55) + 0.45 * np.eye(6)
    table = make_table(gbm_prices(800, 0.0004, vols, corr, seed=314), symbols)
    write_prices_csv(root / "prices.csv", table)
    with open(root / "weights.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["symbol", "weight", "cap"])
        for s in symbols:
            writer.writerow([s, repr(1 / 6), "0.2"])
    with open(root / "events.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["block_number", "timestamp", "vault_type", "token_symbol", "delta_tokens"])
        writer.writerows(
            [
                (100, "2021-01-03T08:00:00+00:00", "ETH-A", "ETH", "25"),
                (150, "2021-02-01T08:00:00+00:00", "WBTC-A", "WBTC", "2"),
                (200, "2021-03-05T08:00:00+00:00", "RWA001-A", "RWA001", "1"),
            ]
        )
    with open(root / "pip.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["block_number", "timestamp", "vault_type", "value_usd"])
        writer.writerow([200, "2021-03-05T08:00:00+00:00", "RWA001-A", "1060"])
    return root


def _tree_bytes(root: Path, skip=("manifest.json",)):
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.name not in skip
    }


def test_cli_determinism(cli_inputs, tmp_path):
    """Every subcommand rerun with identical inputs and seed yields
    byte-identical outputs."""
    invocations = [
        ["optimize", "--prices", "prices.csv", "--window", "200",
         "--objective", "semivariance", "--caps", "0.2"],
        ["frontier", "--prices", "prices.csv", "--window", "300", "--points", "5",
         "--caps", "0.5"],
        ["simulate", "--prices", "prices.csv", "--weights", "weights.csv",
         "--mode", "gbm", "--runs", "300", "--horizon", "120", "--seed", "7"],
        ["simulate", "--prices", "prices.csv", "--weights", "weights.csv",
         "--mode", "historical", "--runs", "300", "--horizon", "120", "--seed", "7"],
        ["rolling", "--prices", "prices.csv", "--window", "100", "--step", "100",
         "--objective", "semivariance", "--caps", "0.2"],
        ["ledger", "--events", "events.csv", "--prices", "prices.csv", "--pip", "pip.csv"],
        ["compare", "--prices", "prices.csv", "--portfolio", "EQ=weights.csv",
         "--runs", "200", "--horizon", "90", "--seed", "3"],
    ]
    os.environ["COLLATERALOPT_DATA_DIR"] = str(cli_inputs)
    try:
        for argv in invocations:
            a, b = tmp_path / "A", tmp_path / "B"
            assert cli_main([str(x) for x in argv + ["--out", a, "--label", "det"]]) == 0
            assert cli_main([str(x) for x in argv + ["--out", b, "--label", "det"]]) == 0
            ta, tb = _tree_bytes(a), _tree_bytes(b)
            assert ta and ta == tb, f"{argv[0]} outputs not byte-identical"
    finally:
        del os.environ["COLLATERALOPT_DATA_DIR"]
    _pass("CLI determinism: all subcommands byte-identical on rerun")


def test_ledger_replay_fixture():
    """Synthetic 3-vault, 50-event fixture (full withdrawal + RWA oracle
    step) reproduces independently replayed daily balances and category
    totals exactly; categories close within 1e-6 relative."""
    start = dt.date(2021, 1, 1)

    def at(day, hour=9):
        d = start + dt.timedelta(days=day)
        return dt.datetime(d.year, d.month, d.day, hour, tzinfo=UTC)

    events = []
    block = 1000
    # ETH-A: +2 on even days 0..28, -1 on odd days 1..27, full exit day 30.
    for day in range(29):
        delta = "2" if day % 2 == 0 else "-1"
        events.append(VaultEvent(block, at(day), "ETH-A", "ETH", Decimal(delta)))
        block += 10
    events.append(VaultEvent(block, at(30), "ETH-A", "ETH", Decimal("-16")))
    block += 10
    # ETH-B: +1 on odd days 5..41.
    for day in range(5, 42, 2):
        events.append(VaultEvent(block, at(day, hour=15), "ETH-B", "ETH", Decimal("1")))
        block += 10
    # RWA001-A: single batch of 1 "token", valued by oracle updates.
    events.append(VaultEvent(block, at(10), "RWA001-A", "RWA001", Decimal("1")))
    assert len(events) == 50
    pips = [
        PipUpdate(block + 5, at(10, hour=10), "RWA001-A", Decimal("1060")),
        PipUpdate(block + 50, at(35, hour=10), "RWA001-A", Decimal("1600000")),
    ]

    n_days = 42
    prices = np.array([100.0 + i for i in range(n_days)])[:, None]
    table = make_table(prices, ("ETH",), start=start)
    series = build_collateral_series(sorted(events, key=lambda e: e.block_number), table, pips)

    # Independent replay: per-day balance accumulation in plain Python.
    expect_a = []
    expect_b = []
    bal_a = bal_b = 0.0
    by_day_a = {}
    by_day_b = {}
    for e in events:
        d = (e.timestamp.date() - start).days
        if e.vault_type == "ETH-A":
            by_day_a[d] = by_day_a.get(d, 0.0) + float(e.delta_tokens)
        elif e.vault_type == "ETH-B":
            by_day_b[d] = by_day_b.get(d, 0.0) + float(e.delta_tokens)
    for day in range(n_days):
        bal_a += by_day_a.get(day, 0.0)
        bal_b += by_day_b.get(day, 0.0)
        expect_a.append(bal_a)
        expect_b.append(bal_b)
    expect_a = np.array(expect_a)
    expect_b = np.array(expect_b)

    i_a = series.vault_types.index("ETH-A")
    i_b = series.vault_types.index("ETH-B")
    assert series.dates == tuple(start + dt.timedelta(days=i) for i in range(n_days))
    assert np.array_equal(series.balances[:, i_a], expect_a)
    assert np.array_equal(series.balances[:, i_b], expect_b)

    # Hand-computed anchors.
    day4 = 4
    assert expect_a[day4] == 4.0  # +2,−1,+2,−1,+2
    assert series.categories["ETH"][day4] == 4.0 * 104.0
    day30 = 30
    assert expect_a[day30] == 0.0  # full withdrawal
    assert expect_b[day30] == 13.0
    assert series.categories["ETH"][day30] == 13.0 * 130.0
    assert series.categories["RWA"][day30] == 1060.0
    assert series.categories["RWA"][35] == 1_600_000.0
    assert series.categories["ETH"][41] == 19.0 * 141.0

    expected_eth = (expect_a + expect_b) * prices[:, 0]
    assert np.array_equal(series.categories["ETH"], expected_eth)

    closure = np.abs(sum(series.categories.values()) - series.total_usd)
    assert np.all(closure <= 1e-6 * np.maximum(series.total_usd, 1.0))

    hist = historical_portfolio(series)
    assert hist.symbols == ("ETH",) and hist.weights[0] == 1.0
    _pass("ledger replay fixture: 50 events, exact balances and category totals")


def test_simulate_throughput(cli_inputs, tmp_path):
    """CLI `simulate` with 10,000 runs x 365 days x 6 assets in < 60 s."""
    t0 = time.monotonic()
    code = cli_main(
        [
            "simulate", "--prices", str(cli_inputs / "prices.csv"),
            "--weights", str(cli_inputs / "weights.csv"),
            "--mode", "gbm", "--runs", "10000", "--horizon", "365", "--seed", "1",
            "--out", str(tmp_path / "o"), "--label", "throughput",
        ]
    )
    elapsed = time.monotonic() - t0
    assert code == 0
    assert elapsed < 60.0, f"simulate took {elapsed:.1f}s"
    report = json.loads((tmp_path / "o/simulate/throughput/report.json").read_text())
    assert report["n_runs"] == 10_000 and report["horizon_days"] == 365
    _pass(f"desk-scale throughput: 10k x 365 x 6 in {elapsed:.1f}s < 60s")


# --- reference-dataset criteria (skipped without the published data) --------

REFERENCE_ENV = "COLLATERALOPT_REFERENCE_DATA"
reference_only = pytest.mark.skipif(
    REFERENCE_ENV not in os.environ,
    reason=f"set {REFERENCE_ENV} to the published-dataset directory to run",
)

DAI_ROW_EXPECTED = {
    "annual_volatility": 0.7982,
    "annual_semideviation": 0.5700,
    "historical_failure_prob": 0.5329,
    "gbm_failure_prob": 0.6190,
}


@reference_only
def test_reference_dataset_table_reproduction():
    """DAI-row metrics within 5 percentage points and exact metric ordering
    between historical and optimized portfolios."""
    root = Path(os.environ[REFERENCE_ENV])
    prices = load_prices(root / "prices.csv")
    entries = load_universe(root / "universe.cfg")
    events_mod = __import__("collateralopt.dss_ledger", fromlist=["load_events"])
    events = events_mod.load_events(root / "events.csv")
    pips = events_mod.load_pip_updates(root / "pip.csv")
    series = build_collateral_series(events, prices, pips)
    dai = historical_portfolio(series, top_k=6)

    kept = filter_universe(
        entries, UniverseFilter(max_rank=100, min_age_years=3.0, exclude_stablecoins=True),
        as_of=prices.dates[-1],
    )
    kept = [s for s in kept if s in prices.symbols]
    uni_table = prices.select(kept)
    uni_caps = caps_vector(entries, kept)
    window = log_returns(uni_table.tail(201))
    a_vol, _ = solve_min_variance(estimate_risk_model(window), uni_caps)
    a_sem, _ = solve_min_semivariance(window, uni_caps)

    dai_table = prices.select(list(dai.symbols))
    dai_caps = caps_vector(entries, list(dai.symbols))
    dai_window = log_returns(dai_table.tail(201))
    dai_vol, _ = solve_min_variance(estimate_risk_model(dai_window), dai_caps)
    dai_sem, _ = solve_min_semivariance(dai_window, dai_caps)

    from collateralopt.portfolio_opt import Portfolio

    dai_portfolio = Portfolio(dai.symbols, dai.weights, np.ones(len(dai.symbols)))
    config = SimConfig(seed=1, n_runs=10_000, horizon_days=365)
    rows = {
        r.name: r
        for r in compare_portfolios(
            [
                ("DAI", dai_portfolio),
                ("A-Vol", a_vol),
                ("A-Sem", a_sem),
                ("DAI-Vol", dai_vol),
                ("DAI-Sem", dai_sem),
            ],
            prices,
            config,
            estimation_days=200,
        )
    }
    dai_row = rows["DAI"]
    for key, expected in DAI_ROW_EXPECTED.items():
        assert abs(getattr(dai_row, key) - expected) <= 0.05, key
    for name in ("A-Vol", "A-Sem", "DAI-Vol", "DAI-Sem"):
        assert rows[name].annual_volatility < dai_row.annual_volatility
        assert rows[name].annual_semideviation < dai_row.annual_semideviation
    assert rows["A-Vol"].annual_volatility <= rows["DAI-Vol"].annual_volatility
    assert rows["A-Sem"].annual_semideviation <= rows["DAI-Sem"].annual_semideviation
    _pass("reference dataset: DAI row within 5pp and orderings hold")


@reference_only
def test_reference_dataset_rolling_btc_dominated():
    """200-day rolling semivariance portfolio is (wrapped-)BTC dominated,
    with ETH persistently positive only after mid-2023."""
    root = Path(os.environ[REFERENCE_ENV])
    prices = load_prices(root / "prices.csv", align="union")
    entries = load_universe(root / "universe.cfg")
    kept = [e.symbol for e in entries if e.symbol in prices.symbols]
    caps = {e.symbol: e.cap for e in entries}
    spec = RollingSpec(
        window_days=200, step_days=7, objective="semivariance", caps=caps, universe=tuple(kept)
    )
    points = [p for p in rolling_optimal(prices, spec) if p.portfolio is not None]
    btc_like = {e.symbol for e in entries if (e.tag or "").lower() == "btc"} or {"WBTC", "BTC"}
    cut = dt.date(2023, 7, 1)

    def weight_of(p, symbols):
        d = p.portfolio.as_dict()
        return sum(d.get(s, 0.0) for s in symbols)

    btc_weights = [weight_of(p, btc_like) for p in points]
    assert np.median(btc_weights) >= 0.15  # at/near the 0.2 cap most dates
    eth_before = [weight_of(p, {"ETH"}) for p in points if p.date < cut]
    eth_after = [weight_of(p, {"ETH"}) for p in points if p.date >= cut]
    assert eth_before and eth_after
    assert np.median(eth_after) > 0.01 >= np.median(eth_before)
    _pass("reference dataset: rolling 200-day portfolio BTC-dominated, ETH after mid-2023")
