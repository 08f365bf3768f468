"""Significance of fitted regions.

A parametric bootstrap asks how often normal noise at the fitted scale would
produce residuals as large as the smallest flagged outlier.  The resulting
p-value is then inflated by a geometric weight that counts how many disks the
size of the region are needed to cover the study area, a multiple-testing
correction for having searched over many candidate regions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import FitResult, SpatialDataset
from .exceptions import EmptyDataError, InvalidParameterError, NoOutliersError

# covering density 0.28, kept as 28/100 so the weight is one correctly rounded division
COVER_NUM = 28
COVER_DEN = 100


@dataclass(frozen=True)
class SignificanceReport:
    p_raw: float
    region_weight: float
    p_corrected: float
    B: int
    epsilon0: float
    sigma_hat: float
    component: Optional[int] = None
    m: Optional[float] = None
    n: Optional[float] = None
    r: Optional[float] = None
    n_rows: int = 0
    n_outliers: int = 0
    vacuous: bool = False

    def to_dict(self) -> dict:
        return {
            "component": self.component,
            "p_raw": self.p_raw,
            "region_weight": self.region_weight,
            "p_corrected": self.p_corrected,
            "B": self.B,
            "epsilon0": self.epsilon0,
            "sigma_hat": self.sigma_hat,
            "m": self.m,
            "n": self.n,
            "r": self.r,
            "n_rows": self.n_rows,
            "n_outliers": self.n_outliers,
            "vacuous": self.vacuous,
        }


def region_weight(m: float, n: float, r: float) -> float:
    """Number of diameter-``r`` disks needed to cover an ``m`` by ``n`` rectangle."""
    for name, v in (("m", m), ("n", n), ("r", r)):
        if not (math.isfinite(v) and v > 0):
            raise InvalidParameterError(f"{name} must be a positive finite number, got {v}")
    return (COVER_NUM * m * n) / (COVER_DEN * r * r)


def _check_B(B):
    if int(B) != B or B < 1:
        raise InvalidParameterError(f"B must be a positive integer, got {B}")
    return int(B)


def _exceed_fraction(draws: np.ndarray, epsilon0: float, B: int) -> float:
    per_round = np.count_nonzero(np.abs(draws) > epsilon0, axis=1) / draws.shape[1]
    # compensated summation keeps the mean independent of evaluation order
    return math.fsum(per_round.tolist()) / B


def bootstrap_test(residuals, outlier_idx, sigma_hat: float, B: int = 1000,
                   seed=0) -> SignificanceReport:
    """Parametric bootstrap p-value for the smallest flagged residual.

    ``epsilon0`` is the smallest absolute residual among ``outlier_idx``.  Each
    of ``B`` rounds draws ``len(residuals)`` values from N(0, sigma_hat^2) and
    records the share whose absolute value exceeds ``epsilon0``; ``p_raw`` is
    the mean share.  The draws depend only on ``seed``, ``B`` and the number of
    residuals, so ``p_raw`` is non-increasing in ``epsilon0`` at a fixed seed.
    The returned report has weight 1, so ``p_corrected == p_raw``.
    """
    r = np.asarray(residuals, dtype=float).reshape(-1)
    idx = np.asarray(outlier_idx, dtype=np.intp).reshape(-1)
    B = _check_B(B)
    if r.size == 0:
        raise EmptyDataError("no residuals supplied")
    if idx.size == 0:
        raise NoOutliersError("no outliers flagged; the test is undefined")
    if idx.min() < 0 or idx.max() >= r.size:
        raise InvalidParameterError("outlier index out of range")
    if not (math.isfinite(sigma_hat) and sigma_hat > 0):
        raise InvalidParameterError(f"sigma_hat must be positive, got {sigma_hat}")
    eps0 = float(np.min(np.abs(r[idx])))
    draws = np.random.default_rng(seed).normal(0.0, sigma_hat, size=(B, r.size))
    p = _exceed_fraction(draws, eps0, B)
    return SignificanceReport(p_raw=p, region_weight=1.0, p_corrected=p, B=B,
                              epsilon0=eps0, sigma_hat=float(sigma_hat),
                              n_rows=int(r.size), n_outliers=int(idx.size))


def attribute_type1(fit: FitResult, ds: SpatialDataset) -> np.ndarray:
    """Component (1-based) whose centroid is nearest to each Type-1 row."""
    t1 = fit.assignment.type1
    if t1.size == 0:
        return np.empty(0, dtype=np.intp)
    W = fit.model.centroids
    d2 = ((ds.S[t1][:, None, :] - W[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1) + 1


def region_significance(fit: FitResult, ds: SpatialDataset, k: int, B: int = 1000,
                        seed=0) -> SignificanceReport:
    """Bootstrap test for component ``k`` (1-based) with the region weight applied.

    The tested rows are the rows labelled ``k`` plus the Type-1 rows whose
    nearest centroid is ``w_k``; residuals are taken under ``beta_k``.  The study
    area is the bounding box of all coordinates and the region diameter is
    twice the RMS distance of the rows labelled ``k`` to ``w_k``.  When no
    Type-1 row is attributed to ``k`` the report has ``p_raw = 1`` and
    ``vacuous = True``.
    """
    K = fit.model.K
    if not 1 <= k <= K:
        raise InvalidParameterError(f"component must lie in 1..{K}, got {k}")
    if fit.assignment.labels.shape[0] != ds.n:
        raise InvalidParameterError("fit and dataset have different row counts")
    B = _check_B(B)
    members = np.flatnonzero(fit.assignment.labels == k)
    if members.size == 0:
        raise EmptyDataError(f"component {k} has no rows")
    comp = fit.model.components[k - 1]
    sigma_hat = math.sqrt(comp.sigma2)

    span = ds.S.max(axis=0) - ds.S.min(axis=0)
    m, n = float(span[0]), float(span[1])
    rms = math.sqrt(float(np.mean(((ds.S[members] - comp.w) ** 2).sum(axis=1))))
    r = 2.0 * rms
    weight = region_weight(m, n, r)

    t1 = fit.assignment.type1
    mine = t1[attribute_type1(fit, ds) == k]
    rows = np.concatenate([members, mine])
    resid = ds.y[rows] - ds.X[rows] @ comp.beta
    common = dict(region_weight=weight, B=B, sigma_hat=sigma_hat, component=k, m=m, n=n,
                  r=r, n_rows=int(rows.size), n_outliers=int(mine.size))
    if mine.size == 0:
        return SignificanceReport(p_raw=1.0, p_corrected=min(1.0, weight), epsilon0=0.0,
                                  vacuous=True, **common)
    idx = np.arange(members.size, rows.size)
    raw = bootstrap_test(resid, idx, sigma_hat, B=B, seed=seed)
    return SignificanceReport(p_raw=raw.p_raw, p_corrected=min(1.0, weight * raw.p_raw),
                              epsilon0=raw.epsilon0, **common)
