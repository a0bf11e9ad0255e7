"""Minimum-variance and minimum-semivariance portfolios on the capped simplex.

Both problems are convex QPs over ``{a : sum(a)=1, 0 <= a_i <= cap_i}``:

* variance: minimize ``a' C a`` with C the daily-return covariance;
* semivariance: minimize ``(1/T) sum_t max(mean_p - r_pt, 0)^2`` where
  ``r_pt`` is the portfolio's daily return and ``mean_p`` its sample mean.
  Eliminating the downside auxiliaries of the standard scenario QP gives a
  smooth piecewise-quadratic objective in the weights alone, so the same
  projected-gradient machinery solves both problems.

The solver is accelerated projected gradient (exact projection, monotone
restarts) with an active-set Newton polish that lands on the exact face
once the clipping pattern stabilizes.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InfeasibleError, UndefinedRatioError
from .market_data import (
    DAYS_PER_YEAR,
    ReturnMatrix,
    RiskModel,
    UniverseEntry,
    estimate_risk_model,
)
from .simplex import (
    achievable_return_range,
    check_caps,
    max_feasible_uniform,
    project_capped_simplex,
    project_capped_simplex_with_return,
)

KKT_TOL = 1e-7
MAX_ITER = 10_000


@dataclass(frozen=True)
class Portfolio:
    """Weights on the capped simplex for a list of token symbols."""

    symbols: tuple[str, ...]
    weights: np.ndarray
    caps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        weights = np.array(self.weights, dtype=float)
        caps = np.array(check_caps(self.caps))
        if weights.shape != (len(self.symbols),) or caps.shape != weights.shape:
            raise DomainError("weights/caps shape does not match symbols")
        if abs(weights.sum() - 1.0) > 1e-8:
            raise DomainError(f"weights sum to {weights.sum()!r}, not 1")
        if np.any(weights < -1e-10) or np.any(weights > caps + 1e-10):
            raise DomainError("weights violate box constraints")
        weights.setflags(write=False)
        caps.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "caps", caps)

    def as_dict(self) -> dict[str, float]:
        return {s: float(w) for s, w in zip(self.symbols, self.weights)}


@dataclass(frozen=True)
class FrontierPoint:
    """One point of the efficient frontier (annualized units)."""

    target_return: float
    volatility: float
    weights: np.ndarray | None
    sharpe: float
    status: str = "ok"


@dataclass(frozen=True)
class UniverseFilter:
    """Popularity / age / asset-backing screen for candidate tokens."""

    max_rank: int = 100
    min_age_years: float = 3.0
    exclude_stablecoins: bool = True

    def __post_init__(self):
        if self.max_rank < 1:
            raise DomainError("max_rank must be >= 1")
        if self.min_age_years < 0:
            raise DomainError("min_age_years must be >= 0")


@dataclass(frozen=True)
class QPSolution:
    """Solver diagnostics attached to an optimized portfolio."""

    weights: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    converged: bool
    flags: tuple[str, ...] = ()

    def report(self) -> dict:
        return {
            "objective": float(self.objective),
            "kkt_residual": float(self.kkt_residual),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "flags": list(self.flags),
        }


def portfolio_variance(weights, cov) -> float:
    """``w' C w`` (daily units, T-1 divisor inherited from ``cov``)."""
    w = np.asarray(weights, dtype=float)
    return float(w @ np.asarray(cov, dtype=float) @ w)


def portfolio_semivariance(weights, returns: ReturnMatrix | np.ndarray) -> float:
    """Downside second moment of the portfolio's daily return series.

    ``(1/T) sum_t min(r_pt - mean_p, 0)^2`` with ``r_pt = sum_i w_i r_it``.
    """
    r = returns.returns if isinstance(returns, ReturnMatrix) else np.asarray(returns, dtype=float)
    w = np.asarray(weights, dtype=float)
    rp = r @ w
    d = np.minimum(rp - rp.mean(), 0.0)
    return float(d @ d / rp.shape[0])


# --- generic projected solver ---------------------------------------------


def _kkt_residual(x, g, proj) -> float:
    return float(np.max(np.abs(x - proj(x - g))))


def _fista_stage(x, f_x, fval, grad, step, proj, budget, target):
    """Monotone FISTA sweep; returns (x, f(x), iterations used, residual)."""
    z = x.copy()
    t_acc = 1.0
    used = 0
    resid = math.inf
    while used < budget:
        g = grad(z)
        x_new = proj(z - step * g)
        f_new = fval(x_new)
        used += 1
        if f_new > f_x:
            # Restart acceleration from the best point seen.
            g = grad(x)
            x_new = proj(x - step * g)
            f_new = fval(x_new)
            used += 1
            t_acc = 1.0
            if f_new > f_x:
                x_new, f_new = x, f_x
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_acc * t_acc))
        z = x_new + ((t_acc - 1.0) / t_next) * (x_new - x)
        moved = float(np.max(np.abs(x_new - x)))
        x, f_x, t_acc = x_new, f_new, t_next
        if used % 10 == 0 or moved == 0.0:
            resid = _kkt_residual(x, grad(x), proj)
            if resid <= target:
                break
            if moved == 0.0:
                break
    if not math.isfinite(resid):
        resid = _kkt_residual(x, grad(x), proj)
    return x, f_x, used, resid


def _polish(x, caps, hess, constraints_lhs, constraints_rhs, proj):
    """Equality-constrained Newton step on the current clipping pattern.

    ``hess`` is the (local) Hessian of the pure-quadratic objective; the
    candidate fixes coordinates at their active bounds and solves the KKT
    system on the free block. Returns a feasible candidate or None.
    """
    tol = 1e-12 * max(1.0, float(np.max(caps)))
    at_zero = x <= tol
    at_cap = x >= caps - tol
    free = ~(at_zero | at_cap)
    n_free = int(free.sum())
    if n_free == 0:
        return None
    a_mat = np.atleast_2d(constraints_lhs)
    k = a_mat.shape[0]
    h_ff = hess[np.ix_(free, free)]
    a_f = a_mat[:, free]
    fixed_vals = np.where(at_cap, caps, 0.0)
    rhs_top = -hess[np.ix_(free, ~free)] @ fixed_vals[~free]
    rhs_bot = np.asarray(constraints_rhs, dtype=float) - a_mat[:, ~free] @ fixed_vals[~free]
    kkt = np.zeros((n_free + k, n_free + k))
    kkt[:n_free, :n_free] = h_ff
    kkt[:n_free, n_free:] = a_f.T
    kkt[n_free:, :n_free] = a_f
    rhs = np.concatenate((rhs_top, rhs_bot))
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    if not np.all(np.isfinite(sol)):
        return None
    cand = fixed_vals.copy()
    cand[free] = sol[:n_free]
    if np.any(cand < -1e-12) or np.any(cand > caps + 1e-12):
        cand = proj(cand)
    else:
        np.clip(cand, 0.0, caps, out=cand)
        deficit = 1.0 - cand.sum()
        if deficit != 0.0:
            cand = proj(cand)
    return cand


def _minimize_on_simplex(
    fval,
    grad,
    lipschitz,
    hess_at,
    proj,
    x0,
    constraints_lhs,
    constraints_rhs,
    caps,
    kkt_tol: float = KKT_TOL,
    max_iter: int = MAX_ITER,
) -> QPSolution:
    flags: list[str] = []
    if lipschitz <= 0.0:
        return QPSolution(
            weights=x0,
            objective=fval(x0),
            kkt_residual=0.0,
            iterations=0,
            converged=True,
            flags=("degenerate_objective",),
        )
    step = 1.0 / lipschitz
    x = x0.copy()
    f_x = fval(x)
    g0 = float(np.max(np.abs(grad(x0))))
    # Converge well past the contract tolerance; the bound is scale-aware so
    # rescaling the objective does not change the accepted iterate.
    target = min(kkt_tol, max(1e-14, 1e-7 * g0))
    iters = 0
    resid = _kkt_residual(x, grad(x), proj)
    stalled = 0
    while iters < max_iter and resid > target:
        x, f_x, used, resid = _fista_stage(
            x, f_x, fval, grad, step, proj, min(250, max_iter - iters), target
        )
        iters += used
        improved_by_polish = False
        for _ in range(40):
            cand = _polish(x, caps, hess_at(x), constraints_lhs, constraints_rhs, proj)
            if cand is None:
                break
            f_cand = fval(cand)
            iters += 1
            tie_band = 4.0 * np.finfo(float).eps * max(abs(f_x), abs(f_cand))
            if f_cand < f_x:
                x, f_x = cand, f_cand
                improved_by_polish = True
            elif f_cand <= f_x + tie_band and _kkt_residual(cand, grad(cand), proj) < resid:
                # Same objective to float precision but a cleaner face.
                x, f_x = cand, f_cand
                resid = _kkt_residual(x, grad(x), proj)
                improved_by_polish = True
                break
            else:
                break
        resid = _kkt_residual(x, grad(x), proj)
        if resid <= target:
            break
        stalled = 0 if improved_by_polish else stalled + 1
        if stalled >= 2:
            break
    if iters >= max_iter and resid > target:
        flags.append("max_iterations")
    if f_x <= 1e-30:
        flags.append("degenerate_objective")
    return QPSolution(
        weights=x,
        objective=f_x,
        kkt_residual=resid,
        iterations=iters,
        converged=resid <= kkt_tol,
        flags=tuple(flags),
    )


def _check_psd(cov: np.ndarray, what: str) -> float:
    eigvals = np.linalg.eigvalsh(cov)
    lam_max = float(eigvals[-1])
    if float(eigvals[0]) < -1e-10 * max(1.0, lam_max):
        raise DomainError(f"{what} is not positive semidefinite (min eig {eigvals[0]:.3e})")
    return lam_max


# --- public optimizers ------------------------------------------------------


def solve_min_variance(model: RiskModel, caps) -> tuple[Portfolio, QPSolution]:
    """Global minimizer of portfolio variance over the capped simplex."""
    caps = check_caps(caps)
    cov = model.cov
    if cov.shape != (caps.shape[0], caps.shape[0]):
        raise DomainError("caps length does not match model size")
    lam_max = _check_psd(cov, "covariance")
    x0 = max_feasible_uniform(caps)

    def fval(a):
        return float(a @ cov @ a)

    def grad(a):
        return 2.0 * (cov @ a)

    def proj(y):
        return project_capped_simplex(y, caps, validate=False)

    hess = 2.0 * cov
    sol = _minimize_on_simplex(
        fval, grad, 2.0 * lam_max, lambda a: hess, proj, x0,
        np.ones((1, caps.shape[0])), np.array([1.0]), caps,
    )
    return Portfolio(model.symbols, sol.weights, caps), sol


def min_variance(model: RiskModel, caps) -> Portfolio:
    return solve_min_variance(model, caps)[0]


def solve_min_semivariance(
    returns: ReturnMatrix,
    caps,
    use_comoment: bool = False,
) -> tuple[Portfolio, QPSolution]:
    """Minimize downside risk over the capped simplex.

    The default objective is the exact scenario semivariance of the
    portfolio return series. ``use_comoment=True`` swaps in the symmetric
    semicovariance-matrix quadratic form ``a' S a`` — cheaper for very long
    histories but only an approximation, since the portfolio's downside
    days are not the union of the assets' downside days.
    """
    caps = check_caps(caps)
    r = returns.returns
    t_obs, m = r.shape
    if caps.shape[0] != m:
        raise DomainError("caps length does not match return matrix width")
    if t_obs < 2:
        raise DomainError("need at least 2 return observations")
    x0 = max_feasible_uniform(caps)

    def proj(y):
        return project_capped_simplex(y, caps, validate=False)

    if use_comoment:
        semicov = estimate_risk_model(returns).semicov
        lam_max = _check_psd(semicov, "semicovariance")
        hess = 2.0 * semicov
        sol = _minimize_on_simplex(
            lambda a: float(a @ semicov @ a),
            lambda a: 2.0 * (semicov @ a),
            2.0 * lam_max,
            lambda a: hess,
            proj,
            x0,
            np.ones((1, m)),
            np.array([1.0]),
            caps,
        )
        sol = QPSolution(
            weights=sol.weights,
            objective=sol.objective,
            kkt_residual=sol.kkt_residual,
            iterations=sol.iterations,
            converged=sol.converged,
            flags=sol.flags + ("comoment_approximation",),
        )
        return Portfolio(returns.symbols, sol.weights, caps), sol

    # Downside matrix: row t is (column means - r_t), so (B a)_t is the
    # portfolio's shortfall below its own mean on day t.
    b_mat = returns.returns.mean(axis=0)[None, :] - r
    gram = b_mat.T @ b_mat
    lam_max = float(np.linalg.eigvalsh(gram)[-1])

    def fval(a):
        d = np.maximum(b_mat @ a, 0.0)
        return float(d @ d) / t_obs

    def grad(a):
        d = np.maximum(b_mat @ a, 0.0)
        return (2.0 / t_obs) * (b_mat.T @ d)

    def hess_at(a):
        active = (b_mat @ a) > 0.0
        if not active.any():
            return np.zeros((m, m))
        b_act = b_mat[active]
        return (2.0 / t_obs) * (b_act.T @ b_act)

    sol = _minimize_on_simplex(
        fval, grad, 2.0 * lam_max / t_obs, hess_at, proj, x0,
        np.ones((1, m)), np.array([1.0]), caps,
    )
    return Portfolio(returns.symbols, sol.weights, caps), sol


def min_semivariance(returns: ReturnMatrix, caps, use_comoment: bool = False) -> Portfolio:
    return solve_min_semivariance(returns, caps, use_comoment)[0]


def efficient_frontier(
    model: RiskModel,
    caps,
    n_points: int,
    risk_free: float = 0.0,
) -> list[FrontierPoint]:
    """Variance-minimal portfolios for equally spaced target returns.

    Targets sweep (annualized) from the min-variance portfolio's return to
    the maximum achievable return under the caps. Infeasible targets are
    marked ``status="infeasible"`` rather than raised.
    """
    if n_points < 2:
        raise DomainError("n_points must be >= 2")
    caps = check_caps(caps)
    cov, mu = model.cov, model.mu
    base, _ = solve_min_variance(model, caps)
    r_mv = float(mu @ base.weights)
    _, r_max = achievable_return_range(mu, caps)
    ann = float(DAYS_PER_YEAR)

    def make_point(target_daily, weights):
        vol = math.sqrt(max(portfolio_variance(weights, cov), 0.0) * ann)
        target_ann = target_daily * ann
        sharpe = (target_ann - risk_free) / vol if vol > 0.0 else math.nan
        w = np.asarray(weights, dtype=float)
        w.setflags(write=False)
        return FrontierPoint(target_ann, vol, w, sharpe, status="ok")

    span_scale = max(abs(r_mv), abs(r_max), 1e-12)
    if r_max - r_mv <= 1e-12 * span_scale:
        return [make_point(r_mv, base.weights)] * n_points

    points: list[FrontierPoint] = []
    warm = base.weights.copy()
    for target in np.linspace(r_mv, r_max, n_points):
        try:
            sol = _solve_frontier_point(cov, mu, caps, float(target), warm)
        except InfeasibleError:
            points.append(
                FrontierPoint(float(target) * ann, math.nan, None, math.nan, status="infeasible")
            )
            continue
        warm = sol.weights
        points.append(make_point(float(target), sol.weights))
    return points


def _solve_frontier_point(cov, mu, caps, target: float, warm) -> QPSolution:
    lam_max = float(np.linalg.eigvalsh(cov)[-1])

    class _Proj:
        beta = 0.0

        def __call__(self, y):
            x, self.beta = project_capped_simplex_with_return(
                y, caps, mu, target, beta_hint=self.beta, validate=False
            )
            return x

    proj = _Proj()
    x0 = proj(np.asarray(warm, dtype=float))
    hess = 2.0 * cov
    lhs = np.vstack((np.ones_like(mu), mu))
    rhs = np.array([1.0, target])
    return _minimize_on_simplex(
        lambda a: float(a @ cov @ a),
        lambda a: 2.0 * (cov @ a),
        2.0 * max(lam_max, 0.0),
        lambda a: hess,
        proj,
        x0,
        lhs,
        rhs,
        caps,
    )


def sharpe_ratio(mu_annual: float, vol_annual: float, risk_free: float = 0.0) -> float:
    """Excess return per unit volatility."""
    if vol_annual < 0.0:
        raise DomainError(f"volatility must be non-negative, got {vol_annual}")
    if vol_annual == 0.0:
        raise UndefinedRatioError("Sharpe ratio undefined for zero volatility")
    return (mu_annual - risk_free) / vol_annual


def _latest_launch_allowed(as_of: dt.date, min_age_years: float) -> dt.date:
    whole = int(min_age_years)
    frac = min_age_years - whole
    try:
        cutoff = as_of.replace(year=as_of.year - whole)
    except ValueError:  # Feb 29 anniversary
        cutoff = as_of.replace(year=as_of.year - whole, day=28)
    if frac > 0.0:
        cutoff -= dt.timedelta(days=round(frac * DAYS_PER_YEAR))
    return cutoff


def filter_universe(
    candidates: list[UniverseEntry],
    filt: UniverseFilter,
    as_of: dt.date,
) -> list[str]:
    """Screen candidate tokens by rank, age, and stablecoin flag.

    Keeps input order; the age boundary is inclusive (a token launched
    exactly ``min_age_years`` before ``as_of`` passes).
    """
    cutoff = _latest_launch_allowed(as_of, filt.min_age_years)
    kept = []
    for entry in candidates:
        if entry.rank is None or entry.launch_date is None:
            raise DomainError(f"universe entry {entry.symbol} lacks rank or launch_date")
        if entry.rank > filt.max_rank:
            continue
        if entry.launch_date > cutoff:
            continue
        if filt.exclude_stablecoins and entry.stablecoin:
            continue
        kept.append(entry.symbol)
    return kept
