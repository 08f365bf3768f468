"""Single-component regression engines: OLS and least trimmed squares.

`lts` is the FAST-LTS style concentration algorithm (random elemental starts,
C-steps to a fixed point); `lts_exact` enumerates every h-subset and exists to
check it.  `lts_flag` adds the usual reweighting step on top of LTS so that the
outlier set is decided by a residual cutoff rather than a fixed trim count.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .core import SIGMA2_FLOOR
from .exceptions import (
    EmptyDataError,
    InsufficientDataError,
    InvalidParameterError,
    TrimTooAggressiveError,
)

MAX_CSTEPS = 50
EXACT_MAX_N = 20


@dataclass(frozen=True)
class RegressionFit:
    beta: np.ndarray
    sigma2: float
    residuals: np.ndarray
    inlier_idx: np.ndarray
    outlier_idx: np.ndarray
    objective: float


def _as_xy(y, X):
    y = np.asarray(y, dtype=float).reshape(-1)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[0] != y.shape[0]:
        raise InvalidParameterError(f"y has {y.shape[0]} rows but X has {X.shape[0]}")
    return y, X


def _solve(y, X):
    # lstsq goes through an SVD, so rank-deficient designs get the minimum-norm solution
    return np.linalg.lstsq(X, y, rcond=None)[0]


def ols(y, X) -> RegressionFit:
    """Ordinary least squares with the maximum-likelihood scale RSS / n."""
    y, X = _as_xy(y, X)
    n = y.shape[0]
    if n < 1:
        raise EmptyDataError("ols needs at least one row")
    beta = _solve(y, X)
    r = y - X @ beta
    rss = float(r @ r)
    return RegressionFit(
        beta=beta,
        sigma2=max(rss / n, SIGMA2_FLOOR),
        residuals=r,
        inlier_idx=np.arange(n),
        outlier_idx=np.empty(0, dtype=np.intp),
        objective=rss,
    )


def lts_consistency(q: float) -> float:
    """E[Z^2 | |Z| <= z_q] for Z ~ N(0, 1), where z_q keeps a fraction q of the mass."""
    if q >= 1.0:
        return 1.0
    z = norm.ppf(0.5 * (1.0 + q))
    return 1.0 - 2.0 * z * norm.pdf(z) / q


def truncated_variance(cutoff: float) -> float:
    """E[Z^2 | |Z| <= cutoff] for a standard normal Z."""
    mass = 2.0 * norm.cdf(cutoff) - 1.0
    return 1.0 - 2.0 * cutoff * norm.pdf(cutoff) / mass


def trim_size(n: int, alpha: float) -> int:
    return n - int(math.floor(alpha * n))


def _h_smallest(r2, h):
    if h >= r2.shape[0]:
        return np.arange(r2.shape[0])
    idx = np.argpartition(r2, h - 1)[:h]
    idx.sort()
    return idx


def _better(obj, idx, best_obj, best_idx):
    if best_idx is None:
        return True
    tol = 1e-12 * max(1.0, abs(best_obj))
    if obj < best_obj - tol:
        return True
    if obj <= best_obj + tol:
        return tuple(idx) < tuple(best_idx)
    return False


def _concentrate(y, X, beta, h):
    """Run C-steps from ``beta`` until the h-subset repeats; return (beta, subset, objective)."""
    prev = None
    for _ in range(MAX_CSTEPS):
        r = y - X @ beta
        idx = _h_smallest(r * r, h)
        if prev is not None and np.array_equal(idx, prev):
            break
        beta = _solve(y[idx], X[idx])
        prev = idx
    r = y - X @ beta
    r2 = r * r
    idx = _h_smallest(r2, h)
    return beta, idx, float(np.sum(r2[idx]))


def _finish(y, X, beta, h, objective):
    n = y.shape[0]
    r = y - X @ beta
    order = np.argsort(np.abs(r), kind="stable")
    inl = np.sort(order[:h])
    out = np.sort(order[h:])
    s2 = objective / h / lts_consistency(h / n)
    return RegressionFit(
        beta=beta,
        sigma2=max(s2, SIGMA2_FLOOR),
        residuals=r,
        inlier_idx=inl,
        outlier_idx=out,
        objective=objective,
    )


def lts(y, X, alpha=0.1, n_starts=50, seed=0, h=None, init_betas=None) -> RegressionFit:
    """Least trimmed squares via random elemental starts and concentration steps.

    Parameters
    ----------
    alpha : float
        Trim fraction; the fit keeps ``h = n - floor(alpha * n)`` rows.
    n_starts : int
        Number of random elemental subsets (size p + 2) to concentrate from.
    seed : int
        Start ``s`` draws from ``default_rng([seed, s])`` so results do not depend
        on evaluation order.
    h : int, optional
        Explicit subset size, overriding ``alpha``.
    init_betas : sequence of arrays, optional
        Extra deterministic starting coefficient vectors (warm starts).

    Returns
    -------
    RegressionFit
        ``objective`` is the sum of the h smallest squared residuals;
        ``outlier_idx`` the n - h rows with the largest absolute residuals and
        ``sigma2`` the normal-consistent scale from the trimmed residuals.
    """
    y, X = _as_xy(y, X)
    n, d = X.shape
    if not 0.0 <= alpha < 0.5:
        raise InvalidParameterError(f"alpha must lie in [0, 0.5), got {alpha}")
    if n < d + 1:
        raise InsufficientDataError(f"lts needs at least {d + 1} rows, got {n}")
    if h is None:
        h = trim_size(n, alpha)
    h = int(h)
    if h < d + 1:
        raise TrimTooAggressiveError(f"subset size {h} is below the minimum {d + 1}")
    if h > n:
        raise InvalidParameterError(f"subset size {h} exceeds n = {n}")
    if h == n:
        base = ols(y, X)
        return RegressionFit(base.beta, base.sigma2, base.residuals, base.inlier_idx,
                             base.outlier_idx, base.objective)

    best = (None, math.inf, None)
    starts = []
    if init_betas is not None:
        starts.extend(np.asarray(b, dtype=float) for b in init_betas)
    for s in range(n_starts):
        rng = np.random.default_rng([seed, s])
        sub = rng.choice(n, size=d + 1, replace=False)
        starts.append(_solve(y[sub], X[sub]))
    for beta0 in starts:
        beta, idx, obj = _concentrate(y, X, beta0, h)
        if _better(obj, idx, best[1], best[2]):
            best = (beta, obj, idx)
    return _finish(y, X, best[0], h, best[1])


def lts_exact(y, X, h) -> RegressionFit:
    """Global LTS minimiser by enumerating every size-h subset (n <= 20 only)."""
    y, X = _as_xy(y, X)
    n, d = X.shape
    if n > EXACT_MAX_N:
        raise InvalidParameterError(f"lts_exact refuses n = {n} > {EXACT_MAX_N}")
    h = int(h)
    if h < d + 1:
        raise TrimTooAggressiveError(f"subset size {h} is below the minimum {d + 1}")
    if h > n:
        raise InvalidParameterError(f"subset size {h} exceeds n = {n}")
    best_obj, best_idx, best_beta = math.inf, None, None
    for comb in itertools.combinations(range(n), h):
        idx = np.array(comb)
        beta = _solve(y[idx], X[idx])
        r = y[idx] - X[idx] @ beta
        obj = float(r @ r)
        if _better(obj, idx, best_obj, best_idx):
            best_obj, best_idx, best_beta = obj, idx, beta
    r = y - X @ best_beta
    r2 = np.sort(r * r)
    return _finish(y, X, best_beta, h, float(np.sum(r2[:h])))


def lts_flag(y, X, alpha=0.45, cutoff=3.0, n_starts=20, seed=0, init_betas=None,
             max_reweight=10, scale_fraction=0.25) -> RegressionFit:
    """Reweighted LTS: flag rows whose residual exceeds ``cutoff`` robust scales.

    Starting from the LTS fit and a scale taken from the ``scale_fraction``
    smallest squared residuals, alternate between flagging
    ``|r| > cutoff * sigma`` and refitting OLS plus a truncation-corrected scale
    on the unflagged rows, until the flagged set stops changing.
    """
    y, X = _as_xy(y, X)
    n = y.shape[0]
    fit = lts(y, X, alpha=alpha, n_starts=n_starts, seed=seed, init_betas=init_betas)
    beta = fit.beta
    r = fit.residuals
    # initial scale from the smallest quarter of squared residuals: the LTS
    # subset itself is contaminated whenever outliers exceed the trim fraction
    m = max(X.shape[1] + 1, int(math.ceil(scale_fraction * n)))
    r2 = np.sort(r * r)[:m]
    sigma2 = max(float(np.mean(r2)) / lts_consistency(m / n), SIGMA2_FLOOR)
    corr = truncated_variance(cutoff)
    inl = None
    for _ in range(max_reweight):
        new = np.flatnonzero(np.abs(r) <= cutoff * math.sqrt(sigma2))
        if inl is not None and np.array_equal(new, inl):
            break
        if new.size < X.shape[1] + 1:
            break
        inl = new
        beta = _solve(y[inl], X[inl])
        r = y - X @ beta
        sigma2 = max(float(np.mean(r[inl] ** 2)) / corr, SIGMA2_FLOOR)
    mask = np.abs(r) <= cutoff * math.sqrt(sigma2)
    inl = np.flatnonzero(mask)
    out = np.flatnonzero(~mask)
    return RegressionFit(
        beta=beta,
        sigma2=sigma2,
        residuals=r,
        inlier_idx=inl,
        outlier_idx=out,
        objective=float(np.sum(r[inl] ** 2)),
    )
