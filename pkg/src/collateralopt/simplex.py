"""Projections onto the capped simplex ``{x : sum(x) = 1, 0 <= x <= caps}``.

The capped simplex is the feasible set of every optimizer in this package.
Its Euclidean projection has a one-dimensional dual: the projected point is
``clip(y - tau, 0, caps)`` for the multiplier ``tau`` making the budget
constraint tight. Because the budget is piecewise linear and non-increasing
in ``tau``, the crossing segment can be located exactly among the 2M
breakpoints, and ``tau`` recovered in closed form from the clipping pattern.

Adding a target-return hyperplane introduces a second multiplier ``beta``;
the dual is concave, so the achieved return is monotone in ``beta`` after
re-solving the budget multiplier, and a nested bisection applies.
"""

from __future__ import annotations

import numpy as np

from .errors import InfeasibleError

_FEAS_TOL = 1e-12


def check_caps(caps, total: float = 1.0) -> np.ndarray:
    """Validate cap vector; returns it as a float array."""
    caps = np.asarray(caps, dtype=float)
    if caps.ndim != 1:
        raise InfeasibleError("caps must be a 1-D vector")
    if np.any(caps <= 0.0) or np.any(caps > 1.0 + _FEAS_TOL):
        raise InfeasibleError("caps must lie in (0, 1]")
    if caps.sum() < total - _FEAS_TOL:
        raise InfeasibleError(
            f"caps sum to {caps.sum():.6g} < {total:.6g}: capped simplex is empty"
        )
    return caps


def project_capped_simplex(y, caps, total: float = 1.0, validate: bool = True) -> np.ndarray:
    """Euclidean projection of ``y`` onto ``{x : sum(x) = total, 0 <= x <= caps}``."""
    y = np.asarray(y, dtype=float)
    if validate:
        caps = check_caps(caps, total)
        if y.shape != caps.shape:
            raise ValueError("y and caps must have the same shape")

    # Budget g(tau) = sum(clip(y - tau, 0, caps)) is non-increasing and
    # piecewise linear with knots at y_i and y_i - caps_i. Locate the
    # segment where it crosses `total`, then solve the linear piece exactly.
    bps = np.concatenate((y - caps, y))
    bps.sort(kind="stable")
    g_at = np.clip(y[None, :] - bps[:, None], 0.0, caps).sum(axis=1)
    hits = np.nonzero(g_at >= total)[0]
    if hits.size == 0:
        # sum(caps) == total up to rounding: the all-caps vertex is the set.
        return np.array(caps, dtype=float, copy=True)
    k = int(hits[-1])
    if k == len(bps) - 1:
        # total == 0 edge; not reachable for total = 1 with valid caps.
        return np.clip(y - bps[-1], 0.0, caps)
    mid = 0.5 * (bps[k] + bps[k + 1])
    shifted = y - mid
    at_cap = shifted >= caps
    free = (shifted > 0.0) & ~at_cap
    n_free = int(free.sum())
    if n_free == 0:
        # Flat segment: the pattern alone meets the budget.
        return np.clip(shifted, 0.0, caps)
    tau = (y[free].sum() + caps[at_cap].sum() - total) / n_free
    x = np.clip(y - tau, 0.0, caps)
    residual = total - x.sum()
    if residual != 0.0:
        x[free] += residual / n_free
        np.clip(x, 0.0, caps, out=x)
    return x


def max_feasible_uniform(caps, total: float = 1.0) -> np.ndarray:
    """Deterministic start point: projection of the uniform vector."""
    caps = check_caps(caps, total)
    m = caps.shape[0]
    return project_capped_simplex(np.full(m, total / m), caps, total, validate=False)


def extreme_return_weights(mu, caps, maximize: bool = True) -> np.ndarray:
    """Vertex of the capped simplex maximizing (or minimizing) ``mu @ x``.

    Greedy fill in sorted order of ``mu``; exact because the feasible set
    is a polymatroid-style box-and-budget polytope.
    """
    mu = np.asarray(mu, dtype=float)
    caps = check_caps(caps)
    order = np.argsort(-mu if maximize else mu, kind="stable")
    x = np.zeros_like(caps)
    remaining = 1.0
    for i in order:
        take = min(float(caps[i]), remaining)
        x[i] = take
        remaining -= take
        if remaining <= 0.0:
            break
    return x


def achievable_return_range(mu, caps) -> tuple[float, float]:
    """(min, max) of ``mu @ x`` over the capped simplex."""
    lo = float(np.dot(mu, extreme_return_weights(mu, caps, maximize=False)))
    hi = float(np.dot(mu, extreme_return_weights(mu, caps, maximize=True)))
    return lo, hi


def project_capped_simplex_with_return(
    y,
    caps,
    mu,
    target: float,
    beta_hint: float = 0.0,
    validate: bool = True,
) -> tuple[np.ndarray, float]:
    """Projection onto ``{x : sum(x)=1, 0<=x<=caps, mu @ x = target}``.

    Bisection over the return multiplier ``beta``: for each ``beta`` the
    budget multiplier is re-solved exactly, and the achieved return
    ``mu @ x`` is non-increasing in ``beta`` (concavity of the dual).
    Returns ``(x, beta)`` so callers can warm-start the next projection.

    Raises InfeasibleError when ``target`` lies outside the achievable range.
    """
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if validate:
        caps = check_caps(caps)
    lo_r, hi_r = achievable_return_range(mu, caps)
    scale = max(1.0, abs(lo_r), abs(hi_r))
    if target < lo_r - 1e-9 * scale or target > hi_r + 1e-9 * scale:
        raise InfeasibleError(
            f"target return {target:.6g} outside achievable range [{lo_r:.6g}, {hi_r:.6g}]"
        )
    if hi_r - lo_r <= 1e-15 * scale:
        return project_capped_simplex(y, caps, validate=False), beta_hint
    target = min(max(target, lo_r), hi_r)
    if target >= hi_r:
        return extreme_return_weights(mu, caps, maximize=True), beta_hint
    if target <= lo_r:
        return extreme_return_weights(mu, caps, maximize=False), beta_hint

    def achieved(beta: float) -> tuple[float, np.ndarray]:
        x = project_capped_simplex(y - beta * mu, caps, validate=False)
        return float(np.dot(mu, x)), x

    def pattern_solve(x: np.ndarray):
        """Exact two-multiplier solve on x's clipping pattern.

        Returns the true projection when the pattern's KKT sign conditions
        validate, else None (pattern not yet isolated by the bisection).
        """
        tol = 1e-11 * max(1.0, float(np.max(caps)))
        free = (x > tol) & (x < caps - tol)
        if not free.any():
            return None
        n_f = int(free.sum())
        sum_mu = float(mu[free].sum())
        sum_mu2 = float(np.dot(mu[free], mu[free]))
        fixed = ~free
        rhs1 = float(y[free].sum()) - (1.0 - float(x[fixed].sum()))
        rhs2 = float(np.dot(mu[free], y[free])) - (
            target - float(np.dot(mu[fixed], x[fixed]))
        )
        det = n_f * sum_mu2 - sum_mu * sum_mu
        if abs(det) <= 1e-300:
            return None
        alpha = (rhs1 * sum_mu2 - rhs2 * sum_mu) / det
        beta_ex = (n_f * rhs2 - sum_mu * rhs1) / det
        shifted = y - alpha - beta_ex * mu
        # KKT signs: free coords must fall inside the box, clipped coords
        # must push outward; only then is the pattern optimal.
        at_cap = x >= caps - tol
        at_zero = x <= tol
        band = 1e-12 * max(1.0, float(np.max(np.abs(shifted))))
        if np.any(shifted[free] < -band) or np.any(shifted[free] > caps[free] + band):
            return None
        if np.any(shifted[at_cap] < caps[at_cap] - band) or np.any(shifted[at_zero] > band):
            return None
        cand = np.clip(shifted, 0.0, caps)
        if (
            abs(cand.sum() - 1.0) <= 1e-9
            and abs(float(np.dot(mu, cand)) - target) <= 1e-9 * scale
        ):
            return cand, beta_ex
        return None

    # Bracket the root; achieved return is non-increasing in beta.
    spread = float(np.ptp(mu))
    step = max(1.0, (np.max(np.abs(y)) + 1.0) / max(spread, 1e-300))
    lo_b, hi_b = beta_hint - step, beta_hint + step
    r_lo, _ = achieved(lo_b)
    r_hi, _ = achieved(hi_b)
    for _ in range(200):
        if r_lo >= target:
            break
        lo_b -= step
        step *= 4.0
        r_lo, _ = achieved(lo_b)
    for _ in range(200):
        if r_hi <= target:
            break
        hi_b += step
        step *= 4.0
        r_hi, _ = achieved(hi_b)

    x = None
    for it in range(200):
        mid = 0.5 * (lo_b + hi_b)
        r_mid, x = achieved(mid)
        if r_mid > target:
            lo_b = mid
        else:
            hi_b = mid
        done = hi_b - lo_b <= 1e-16 * max(1.0, abs(lo_b), abs(hi_b))
        if done or it % 8 == 7:
            solved = pattern_solve(x)
            if solved is not None:
                return solved
            if done:
                break
    beta = 0.5 * (lo_b + hi_b)
    if x is None:
        _, x = achieved(beta)
    return x, beta
