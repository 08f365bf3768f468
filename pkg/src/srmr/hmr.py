"""Hybrid mixture regression: classification EM on a blend of regression and
spatial membership probabilities.

Each iteration computes ``(1 - lam) * p_reg + lam * p_spa``, hard-assigns rows
to the argmax, flags rows whose regression and spatial argmax disagree (Type-2
outliers), then refits every cluster by OLS and moves its centroid to the mean
coordinate of its rows.  Type-2 rows stay in the refit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    Assignment,
    Component,
    MixtureModel,
    SpatialDataset,
    argmax_first,
    default_tau2,
    hybrid_posterior,
)
from .exceptions import InfeasibleKError, InvalidParameterError
from .robust import ols

DEFAULT_L0 = 100


@dataclass(frozen=True)
class HmrState:
    model: MixtureModel
    labels: np.ndarray  # 0-based cluster index per row
    type2: np.ndarray
    hybrid_posterior: np.ndarray
    p_reg: np.ndarray
    p_spa: np.ndarray
    iteration: int
    converged: bool

    @property
    def partition(self):
        return [np.flatnonzero(self.labels == k) for k in range(self.model.K)]

    @property
    def sizes(self):
        return np.bincount(self.labels, minlength=self.model.K)


def vote_type2(p_reg, p_spa) -> np.ndarray:
    """Rows whose most likely regression component differs from their most likely region."""
    p_reg = np.asarray(p_reg)
    p_spa = np.asarray(p_spa)
    if p_reg.shape != p_spa.shape:
        raise InvalidParameterError("posterior matrices differ in shape")
    return np.flatnonzero(argmax_first(p_reg) != argmax_first(p_spa))


def check_feasible(n: int, K: int, p: int):
    if K < 1:
        raise InvalidParameterError("K must be at least 1")
    if n < K * (p + 2):
        raise InfeasibleKError(f"K = {K} needs at least {K * (p + 2)} rows, got {n}")


def ensure_min_sizes(labels, K, min_size, badness):
    """Refill undersized clusters with the worst-explained rows of larger ones.

    ``badness`` is either a length-N vector (shared ranking) or an N x K matrix
    (per-cluster ranking, smaller is taken first).
    """
    labels = labels.copy()
    counts = np.bincount(labels, minlength=K)
    for k in range(K):
        if counts[k] >= min_size:
            continue
        score = badness if badness.ndim == 1 else badness[:, k]
        for i in np.argsort(score, kind="stable"):
            if counts[k] >= min_size:
                break
            src = labels[i]
            if src == k or counts[src] <= min_size:
                continue
            labels[i] = k
            counts[src] -= 1
            counts[k] += 1
        if counts[k] < min_size:
            raise InfeasibleKError(f"cannot give cluster {k} the {min_size} rows it needs")
    return labels


def m_step(ds: SpatialDataset, labels, K, lam, tau2) -> MixtureModel:
    n = ds.n
    comps = []
    for k in range(K):
        rows = np.flatnonzero(labels == k)
        fit = ols(ds.y[rows], ds.X[rows])
        comps.append(Component(pi=rows.size / n, beta=fit.beta, sigma2=fit.sigma2,
                               w=ds.S[rows].mean(axis=0)))
    return MixtureModel(tuple(comps), lam, tau2)


def farthest_point_labels(S, K, seed=0):
    """Farthest-point seeding on coordinates followed by nearest-seed assignment."""
    S = np.asarray(S, dtype=float)
    n = S.shape[0]
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    mind = ((S - S[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, K):
        nxt = int(np.argmax(mind))
        chosen.append(nxt)
        mind = np.minimum(mind, ((S - S[nxt]) ** 2).sum(axis=1))
    d2 = ((S[:, None, :] - S[chosen][None, :, :]) ** 2).sum(axis=2)
    return argmax_first(-d2), d2


def _initial_labels(ds, K, init, seed):
    p = ds.p
    if init is None or isinstance(init, (int, np.integer)):
        s = seed if init is None else int(init)
        labels, d2 = farthest_point_labels(ds.S, K, s)
        return ensure_min_sizes(labels, K, p + 2, d2)
    if isinstance(init, Assignment):
        lab = np.asarray(init.labels, dtype=np.intp) - 1
    else:
        lab = np.asarray(init, dtype=np.intp).copy()
    if lab.shape != (ds.n,):
        raise InvalidParameterError("initial labels do not match the dataset")
    known = lab >= 0
    if not known.any():
        raise InvalidParameterError("initial assignment has no labelled rows")
    # unlabelled rows go to the nearest centroid of the labelled ones
    cents = np.vstack([
        ds.S[known & (lab == k)].mean(axis=0) if np.any(known & (lab == k)) else ds.S.mean(axis=0)
        for k in range(K)
    ])
    d2 = ((ds.S[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2)
    lab[~known] = argmax_first(-d2[~known])
    if lab.max() >= K:
        raise InvalidParameterError("initial labels exceed K")
    return ensure_min_sizes(lab, K, p + 2, d2)


def hmr_fit(ds: SpatialDataset, K: int, lam: float = 0.5, init=None, L0: int = DEFAULT_L0,
            seed: int = 0, tau2: Optional[float] = None) -> HmrState:
    """Fit the hybrid mixture regression by classification EM.

    ``init`` may be None or an int (farthest-point seeding on coordinates with
    that seed), a 0-based label vector or an `Assignment` (initial partition),
    or a `MixtureModel` (warm start; its lambda and tau2 are replaced).

    Stops when a C-step reproduces the partition the current parameters were
    estimated from, when any earlier partition recurs, or after L0 iterations.
    The returned model is always the M-step of the returned ``labels``.
    """
    if not 0.0 <= lam <= 1.0:
        raise InvalidParameterError(f"lambda must lie in [0, 1], got {lam}")
    if L0 < 1:
        raise InvalidParameterError("L0 must be at least 1")
    p = ds.p
    check_feasible(ds.n, K, p)
    if tau2 is None:
        tau2 = default_tau2(ds.S, rng=seed)

    if isinstance(init, MixtureModel):
        if init.K != K:
            raise InvalidParameterError("warm-start model has the wrong number of components")
        model = MixtureModel(init.components, lam, tau2)
        prev = None
    else:
        prev = _initial_labels(ds, K, init, seed)
        model = m_step(ds, prev, K, lam, tau2)

    seen = set() if prev is None else {prev.tobytes()}
    converged = False
    it = 0
    hyb = p_reg = p_spa = None
    type2 = np.empty(0, dtype=np.intp)
    while it < L0:
        it += 1
        hyb, p_reg, p_spa = hybrid_posterior(ds, model)
        labels = argmax_first(hyb)
        labels = ensure_min_sizes(labels, K, p + 2, hyb.max(axis=1))
        type2 = vote_type2(p_reg, p_spa)
        if prev is not None and np.array_equal(labels, prev):
            converged = True
            break
        key = labels.tobytes()
        cycle = key in seen
        seen.add(key)
        model = m_step(ds, labels, K, lam, tau2)
        prev = labels
        if cycle:
            break
    return HmrState(
        model=model,
        labels=prev,
        type2=type2,
        hybrid_posterior=hyb,
        p_reg=p_reg,
        p_spa=p_spa,
        iteration=it,
        converged=converged,
    )
