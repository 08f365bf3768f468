"""Domain types and likelihood primitives.

Everything here is an immutable value or a pure function.  Arrays stored on
the dataclasses are marked read-only at construction time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import EmptyLikelihoodError, InvalidParameterError

DENSITY_FLOOR = 1e-300
SIGMA2_FLOOR = 1e-8

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _index_set(idx):
    return _frozen(np.unique(np.asarray(idx, dtype=np.intp)), dtype=np.intp)


@dataclass(frozen=True)
class SpatialDataset:
    """Response ``y``, design matrix ``X`` (intercept first) and 2-D coordinates ``S``."""

    y: np.ndarray
    X: np.ndarray
    S: np.ndarray
    ids: Optional[tuple] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        S = np.asarray(self.S, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        n = y.shape[0]
        if n < 1:
            raise InvalidParameterError("dataset needs at least one row")
        if X.shape[0] != n or S.shape != (n, 2):
            raise InvalidParameterError(
                f"row mismatch: y has {n}, X has {X.shape[0]}, S has shape {S.shape}")
        if not np.all(X[:, 0] == 1.0):
            raise InvalidParameterError("first column of X must be the intercept (all ones)")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X)) and np.all(np.isfinite(S))):
            raise InvalidParameterError("non-finite values in dataset")
        if self.ids is not None and len(self.ids) != n:
            raise InvalidParameterError("ids length does not match number of rows")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "S", _frozen(S))
        if self.ids is not None:
            object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))

    @classmethod
    def from_predictors(cls, y, x, S, ids=None):
        """Build a dataset from raw predictors, prepending the intercept column."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        X = np.column_stack([np.ones(x.shape[0]), x])
        return cls(y=y, X=X, S=S, ids=ids)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        """Number of predictors, excluding the intercept."""
        return self.X.shape[1] - 1

    def subset(self, rows) -> "SpatialDataset":
        rows = np.asarray(rows, dtype=np.intp)
        ids = None if self.ids is None else tuple(self.ids[i] for i in rows)
        return SpatialDataset(self.y[rows], self.X[rows], self.S[rows], ids)


@dataclass(frozen=True)
class Component:
    pi: float
    beta: np.ndarray
    sigma2: float
    w: np.ndarray

    def __post_init__(self):
        if not (0.0 < self.pi <= 1.0 + 1e-12):
            raise InvalidParameterError(f"mixing weight must lie in (0, 1], got {self.pi}")
        if not self.sigma2 > 0:
            raise InvalidParameterError(f"sigma2 must be positive, got {self.sigma2}")
        object.__setattr__(self, "pi", float(self.pi))
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "beta", _frozen(np.asarray(self.beta, dtype=float).reshape(-1)))
        w = np.asarray(self.w, dtype=float).reshape(-1)
        if w.shape != (2,):
            raise InvalidParameterError("centroid must have two coordinates")
        object.__setattr__(self, "w", _frozen(w))


@dataclass(frozen=True)
class MixtureModel:
    components: tuple
    lam: float
    tau2: float

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) < 1:
            raise InvalidParameterError("a mixture needs at least one component")
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidParameterError(f"lambda must lie in [0, 1], got {self.lam}")
        if not self.tau2 > 0:
            raise InvalidParameterError(f"tau2 must be positive, got {self.tau2}")
        total = math.fsum(c.pi for c in comps)
        if abs(total - 1.0) > 1e-9:
            raise InvalidParameterError(f"mixing weights sum to {total}, expected 1")
        dims = {c.beta.shape[0] for c in comps}
        if len(dims) != 1:
            raise InvalidParameterError("all components need coefficient vectors of equal length")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "tau2", float(self.tau2))

    @classmethod
    def from_arrays(cls, pis, betas, sigma2s, centroids, lam=0.5, tau2=1.0):
        betas = np.atleast_2d(np.asarray(betas, dtype=float))
        centroids = np.atleast_2d(np.asarray(centroids, dtype=float))
        comps = tuple(
            Component(pi=float(p), beta=b, sigma2=float(s), w=w)
            for p, b, s, w in zip(pis, betas, sigma2s, centroids)
        )
        return cls(comps, lam, tau2)

    @property
    def K(self) -> int:
        return len(self.components)

    @property
    def pis(self) -> np.ndarray:
        return np.array([c.pi for c in self.components])

    @property
    def betas(self) -> np.ndarray:
        return np.vstack([c.beta for c in self.components])

    @property
    def sigma2s(self) -> np.ndarray:
        return np.array([c.sigma2 for c in self.components])

    @property
    def centroids(self) -> np.ndarray:
        return np.vstack([c.w for c in self.components])


@dataclass(frozen=True)
class Assignment:
    """Final labelling: 0 marks an outlier, k >= 1 the k-th region."""

    labels: np.ndarray
    type1: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.intp))
    type2: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.intp))

    def __post_init__(self):
        labels = _frozen(np.asarray(self.labels).reshape(-1), dtype=np.intp)
        t1 = _index_set(self.type1)
        t2 = _index_set(self.type2)
        if np.intersect1d(t1, t2).size:
            raise InvalidParameterError("type1 and type2 outlier sets overlap")
        if labels.size and labels.min() < 0:
            raise InvalidParameterError("labels must be non-negative")
        outl = np.flatnonzero(labels == 0)
        if not np.array_equal(outl, np.union1d(t1, t2)):
            raise InvalidParameterError("rows labelled 0 must be exactly type1 | type2")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "type1", t1)
        object.__setattr__(self, "type2", t2)

    @property
    def outliers(self) -> np.ndarray:
        return np.union1d(self.type1, self.type2)


@dataclass(frozen=True)
class FitResult:
    """Output of a spatial robust mixture regression fit.

    ``cluster_labels`` holds the 0-based partition the final M-step was computed
    from; it covers Type-2 rows too (they stay in the estimation) and is -1 on
    Type-1 rows.
    """

    model: MixtureModel
    assignment: Assignment
    trimmed_loglik: float
    bic: float
    iterations: int
    converged: bool
    seed: int
    cluster_labels: Optional[np.ndarray] = None
    trace: tuple = ()
    start_index: int = 0
    n_starts: int = 1
    bic_by_k: Optional[dict] = None
    noise_bic: Optional[float] = None

    @property
    def K(self) -> int:
        return self.model.K

    @property
    def labels(self) -> np.ndarray:
        return self.assignment.labels

    @property
    def type1(self) -> np.ndarray:
        return self.assignment.type1

    @property
    def type2(self) -> np.ndarray:
        return self.assignment.type2


def gaussian_density(r, sigma2):
    """Normal pdf with mean zero at residual ``r``, floored at ``DENSITY_FLOOR``.

    Works elementwise on arrays; ``sigma2`` broadcasts against ``r``.
    """
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(~(sigma2 > 0)):
        raise InvalidParameterError("sigma2 must be positive")
    r = np.asarray(r, dtype=float)
    dens = np.exp(-0.5 * r * r / sigma2) / np.sqrt(2.0 * np.pi * sigma2)
    dens = np.maximum(dens, DENSITY_FLOOR)
    if dens.ndim == 0:
        return float(dens)
    return dens


def _log_density(r, sigma2):
    return -_LOG_SQRT_2PI - 0.5 * np.log(sigma2) - 0.5 * r * r / sigma2


def residual_matrix(ds: SpatialDataset, model: MixtureModel) -> np.ndarray:
    """N x K matrix of residuals y_i - x_i^T beta_k."""
    return ds.y[:, None] - ds.X @ model.betas.T


def regression_posterior(ds: SpatialDataset, model: MixtureModel, return_fallbacks=False):
    """Membership probabilities from the regression likelihood alone.

    Rows where every component density sits at the floor are set to 1/K; the
    number of such rows is returned as well when ``return_fallbacks`` is set.
    """
    K = model.K
    dens = gaussian_density(residual_matrix(ds, model), model.sigma2s[None, :])
    dead = np.all(dens <= DENSITY_FLOOR, axis=1)
    weighted = dens * model.pis[None, :]
    post = weighted / weighted.sum(axis=1, keepdims=True)
    if dead.any():
        post[dead] = 1.0 / K
    if return_fallbacks:
        return post, int(dead.sum())
    return post


def spatial_posterior(ds: SpatialDataset, model: MixtureModel) -> np.ndarray:
    """Gaussian-kernel softmax of squared distance to each centroid."""
    return spatial_posterior_from_coords(ds.S, model.centroids, model.tau2)


def spatial_posterior_from_coords(S, centroids, tau2) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    centroids = np.asarray(centroids, dtype=float)
    if S.ndim != 2 or S.shape[1] != centroids.shape[1]:
        raise InvalidParameterError("coordinate and centroid dimensions differ")
    d2 = ((S[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    logits = -d2 / (2.0 * tau2)
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def hybrid_posterior(ds: SpatialDataset, model: MixtureModel):
    """Return ``(hybrid, p_reg, p_spa)`` with hybrid = (1-lam) p_reg + lam p_spa."""
    p_reg = regression_posterior(ds, model)
    p_spa = spatial_posterior(ds, model)
    lam = model.lam
    return (1.0 - lam) * p_reg + lam * p_spa, p_reg, p_spa


def row_loglik(ds: SpatialDataset, model: MixtureModel) -> np.ndarray:
    """Per-row mixture log-likelihood log sum_k pi_k N(r_ik; 0, sigma_k^2)."""
    logd = _log_density(residual_matrix(ds, model), model.sigma2s[None, :])
    logd = logd + np.log(model.pis)[None, :]
    m = logd.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(logd - m).sum(axis=1, keepdims=True)))[:, 0]


def trimmed_loglik(ds: SpatialDataset, model: MixtureModel, assignment: Assignment) -> float:
    labels = assignment.labels
    if labels.shape[0] != ds.n:
        raise InvalidParameterError("assignment length does not match dataset")
    keep = labels != 0
    if not keep.any():
        raise EmptyLikelihoodError("every row is labelled as an outlier")
    return math.fsum(row_loglik(ds, model)[keep])


def n_free_parameters(K: int, p: int) -> int:
    # K(p+1) coefficients + K variances + (K-1) mixing weights
    return K * (p + 3) - 1


def bic(trimmed_loglik: float, K: int, p: int, n_used: int) -> float:
    if n_used < 1:
        raise InvalidParameterError("n_used must be at least 1")
    return -2.0 * trimmed_loglik + n_free_parameters(K, p) * math.log(n_used)


def noise_loglik(ds: SpatialDataset, model: MixtureModel, assignment: Assignment) -> float:
    """Log-likelihood with outlier rows scored by a uniform noise component.

    Inliers contribute ``log((1 - eps) * sum_k pi_k N(r_ik))`` and every
    outlier ``log(eps / range(y))``, with ``eps`` the outlier share.  Unlike
    the trimmed likelihood this does not improve when rows are discarded.
    """
    labels = assignment.labels
    keep = labels != 0
    n = labels.shape[0]
    n_out = n - int(keep.sum())
    if n_out == n:
        raise EmptyLikelihoodError("every row is labelled as an outlier")
    eps = n_out / n
    ll = math.fsum(row_loglik(ds, model)[keep]) + (n - n_out) * math.log1p(-eps)
    if n_out:
        span = float(ds.y.max() - ds.y.min())
        ll += n_out * (math.log(eps) - math.log(span if span > 0 else 1.0))
    return ll


def noise_bic(ds: SpatialDataset, model: MixtureModel, assignment: Assignment) -> float:
    """BIC of the mixture plus uniform noise component, over all N rows."""
    n_out = int(np.count_nonzero(assignment.labels == 0))
    q = n_free_parameters(model.K, ds.p) + (1 if n_out else 0)
    return -2.0 * noise_loglik(ds, model, assignment) + q * math.log(ds.n)


def default_tau2(S, rng=None, max_rows=500) -> float:
    """Squared median pairwise coordinate distance over at most ``max_rows`` rows."""
    S = np.asarray(S, dtype=float)
    n = S.shape[0]
    if n > max_rows:
        rng = np.random.default_rng(rng)
        S = S[np.sort(rng.choice(n, size=max_rows, replace=False))]
        n = max_rows
    if n < 2:
        return 1.0
    iu = np.triu_indices(n, k=1)
    d = np.sqrt(((S[:, None, :] - S[None, :, :]) ** 2).sum(axis=2))[iu]
    med = float(np.median(d))
    return med * med if med > 0 else 1.0


def argmax_first(P: np.ndarray) -> np.ndarray:
    """Row argmax with ties going to the lowest column index."""
    return np.argmax(P, axis=1)
