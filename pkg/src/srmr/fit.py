"""Spatial robust mixture regression: the outer trimming loop around `hmr_fit`.

Every random start seeds the components by LTS on random subsets, then
alternates between (i) flagging regression (Type-1) outliers with a reweighted
LTS fit inside each current cluster and (ii) refitting the hybrid mixture on
the remaining rows, which also yields the spatial (Type-2) outliers.  The loop
stops once the outlier sets repeat.  Among all starts, the one whose outlier
indicator vector lies closest to the mean indicator vector is reported.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import (
    Assignment,
    FitResult,
    MixtureModel,
    SpatialDataset,
    argmax_first,
    bic,
    default_tau2,
    hybrid_posterior,
    noise_bic,
    regression_posterior,
    trimmed_loglik,
)
from .exceptions import FitFailedError, InfeasibleKError, InvalidParameterError, SRMRError
from .hmr import check_feasible, hmr_fit
from .robust import lts, lts_flag

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitOptions:
    """Hyperparameters shared by `srmr_fit` and `select_k`."""

    lam: float = 0.5
    alpha: float = 0.45
    init_alpha: float = 0.45
    cutoff: float = 3.0
    n0: Optional[int] = None
    L0: int = 20
    hmr_L0: int = 100
    J: int = 10
    lts_starts: int = 20
    tau2: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidParameterError(f"lambda must lie in [0, 1], got {self.lam}")
        for name in ("alpha", "init_alpha"):
            a = getattr(self, name)
            if not 0.0 <= a < 0.5:
                raise InvalidParameterError(f"{name} must lie in [0, 0.5), got {a}")
        if self.J < 1 or self.L0 < 1 or self.hmr_L0 < 1:
            raise InvalidParameterError("J, L0 and hmr_L0 must be positive")
        if self.cutoff <= 0:
            raise InvalidParameterError("cutoff must be positive")


@dataclass
class _Start:
    index: int
    model: MixtureModel
    cluster_labels: np.ndarray
    type1: np.ndarray
    type2: np.ndarray
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)


def default_n0(n: int, K: int, p: int) -> int:
    return max(p + 2, int(math.ceil(0.5 * n / K)))


def initial_subsets(S, K, n0, rng):
    """Random spatially local subsets: anchors drawn k-means++ style, each with its n0 nearest rows."""
    n = S.shape[0]
    anchors = [int(rng.integers(n))]
    d2 = ((S - S[anchors[0]]) ** 2).sum(axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            nxt = int(rng.integers(n))
        anchors.append(nxt)
        d2 = np.minimum(d2, ((S - S[nxt]) ** 2).sum(axis=1))
    subsets = []
    for a in anchors:
        dist = ((S - S[a]) ** 2).sum(axis=1)
        subsets.append(np.sort(np.argsort(dist, kind="stable")[:n0]))
    return subsets


def _init_model(ds, K, n0, opts, rng, seed_base, tau2):
    betas, sig2, cents = [], [], []
    for k, rows in enumerate(initial_subsets(ds.S, K, n0, rng)):
        fit = lts(ds.y[rows], ds.X[rows], alpha=opts.init_alpha,
                  n_starts=opts.lts_starts, seed=seed_base + k)
        betas.append(fit.beta)
        sig2.append(fit.sigma2)
        cents.append(ds.S[rows].mean(axis=0))
    pis = np.full(K, 1.0 / K)
    model = MixtureModel.from_arrays(pis, betas, sig2, cents, opts.lam, tau2)
    # starting posteriors are the normalised residual densities
    labels = argmax_first(regression_posterior(ds, model))
    return model, labels


def _flag_type1(ds, labels, K, opts, seed_base, warm):
    """Reweighted-LTS outliers inside every current cluster, as global row indices."""
    out = []
    d = ds.X.shape[1]
    for k in range(K):
        rows = np.flatnonzero(labels == k)
        if rows.size < d + 2:
            continue
        init = None if warm is None else [warm.components[k].beta]
        fit = lts_flag(ds.y[rows], ds.X[rows], alpha=opts.alpha, cutoff=opts.cutoff,
                       n_starts=opts.lts_starts, seed=seed_base + k, init_betas=init)
        out.append(rows[fit.outlier_idx])
    if not out:
        return np.empty(0, dtype=np.intp)
    return np.unique(np.concatenate(out))


def _run_start(ds: SpatialDataset, K: int, opts: FitOptions, seed: int, j: int, tau2: float) -> _Start:
    rng = np.random.default_rng([seed, j])
    n0 = opts.n0 if opts.n0 is not None else default_n0(ds.n, K, ds.p)
    n0 = min(n0, ds.n)
    seed_base = int(rng.integers(2**31))
    model, labels = _init_model(ds, K, n0, opts, rng, seed_base, tau2)

    everything = np.arange(ds.n)
    prev = None
    type1 = type2 = np.empty(0, dtype=np.intp)
    cluster_labels = None
    converged = False
    trace = []
    it = 0
    while it < opts.L0:
        it += 1
        warm = model if it > 1 else None
        type1 = _flag_type1(ds, labels, K, opts, seed_base + 1000 * it, warm)
        keep = np.setdiff1d(everything, type1, assume_unique=True)
        check_feasible(keep.size, K, ds.p)
        state = hmr_fit(ds.subset(keep), K, lam=opts.lam, init=model, L0=opts.hmr_L0,
                        seed=seed_base, tau2=tau2)
        model = state.model
        type2 = keep[state.type2]
        cluster_labels = np.full(ds.n, -1, dtype=np.intp)
        cluster_labels[keep] = state.labels
        trace.append((int(type1.size), int(type2.size), bool(state.converged)))
        current = (type1.tobytes(), type2.tobytes())
        if current == prev:
            converged = True
            break
        prev = current
        # next round assigns every row, including current outliers, by the hybrid posterior
        labels = argmax_first(hybrid_posterior(ds, model)[0])
        labels[keep] = state.labels
    return _Start(j, model, cluster_labels, type1, type2, it, converged, trace)


def _run_start_safe(args):
    ds, K, opts, seed, j, tau2 = args
    try:
        return _run_start(ds, K, opts, seed, j, tau2)
    except SRMRError as exc:
        return f"start {j}: {type(exc).__name__}: {exc}"


def _threads(n_jobs):
    if n_jobs is not None:
        return max(1, int(n_jobs))
    env = os.environ.get("SRMR_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidParameterError(f"SRMR_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _assignment(n, cluster_labels, type1, type2):
    labels = cluster_labels + 1
    labels[type1] = 0
    labels[type2] = 0
    return Assignment(labels=labels, type1=type1, type2=type2)


def srmr_fit(ds: SpatialDataset, K: int, seed: int = 0, options: Optional[FitOptions] = None,
             n_jobs: Optional[int] = None, **kwargs) -> FitResult:
    """Fit a K-component spatial robust mixture regression.

    Hyperparameters come from ``options`` (a `FitOptions`) or keyword overrides
    such as ``lam=0.3, J=5``.  Starts are independent and can run in ``n_jobs``
    worker processes without changing the result.
    """
    opts = options or FitOptions()
    if kwargs:
        opts = FitOptions(**{**opts.__dict__, **kwargs})
    check_feasible(ds.n, K, ds.p)
    if opts.n0 is not None and opts.n0 < ds.p + 2:
        raise InvalidParameterError(f"n0 must be at least p + 2 = {ds.p + 2}")
    tau2 = opts.tau2 if opts.tau2 is not None else default_tau2(ds.S, rng=seed)

    jobs = [(ds, K, opts, seed, j, tau2) for j in range(opts.J)]
    workers = min(_threads(n_jobs), opts.J)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_start_safe, jobs))
    else:
        outcomes = [_run_start_safe(a) for a in jobs]

    starts = [o for o in outcomes if isinstance(o, _Start)]
    failures = [o for o in outcomes if isinstance(o, str)]
    if not starts:
        raise FitFailedError(f"all {opts.J} starts failed for K = {K}", failures)

    scored = []
    for st in starts:
        asg = _assignment(ds.n, st.cluster_labels, st.type1, st.type2)
        try:
            ll = trimmed_loglik(ds, st.model, asg)
        except SRMRError:
            ll = -math.inf
        scored.append((st, asg, ll))

    F = np.zeros((len(scored), ds.n))
    for r, (st, asg, _) in enumerate(scored):
        F[r, asg.outliers] = 1.0
    dist = ((F - F.mean(axis=0)) ** 2).sum(axis=1)
    order = sorted(range(len(scored)), key=lambda r: (dist[r], -scored[r][2], scored[r][0].index))
    st, asg, ll = scored[order[0]]
    if not math.isfinite(ll):
        raise FitFailedError(f"selected start has no inlying rows for K = {K}", failures)
    n_used = int(np.count_nonzero(asg.labels))
    return FitResult(
        model=st.model,
        assignment=asg,
        trimmed_loglik=ll,
        bic=bic(ll, K, ds.p, n_used),
        noise_bic=noise_bic(ds, st.model, asg),
        iterations=st.iterations,
        converged=st.converged,
        seed=seed,
        cluster_labels=st.cluster_labels,
        trace=tuple(st.trace),
        start_index=st.index,
        n_starts=len(starts),
    )


def select_k(ds: SpatialDataset, k_range: Sequence[int], seed: int = 0,
             options: Optional[FitOptions] = None, n_jobs: Optional[int] = None,
             criterion: str = "noise", **kwargs) -> FitResult:
    """Fit every K in ``k_range`` and return the fit with the smallest criterion.

    ``criterion="noise"`` (default) compares `noise_bic`, which charges each
    flagged outlier a uniform-noise density; ``"trimmed"`` compares the plain
    trimmed-likelihood `bic`.  Ties go to the smaller K.  The returned result
    carries the criterion value of every K that could be fitted in ``bic_by_k``.
    """
    if criterion not in ("noise", "trimmed"):
        raise InvalidParameterError("criterion must be 'noise' or 'trimmed'")
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise InvalidParameterError("k_range is empty")
    fits = {}
    errors = []
    for K in ks:
        try:
            fits[K] = srmr_fit(ds, K, seed=seed, options=options, n_jobs=n_jobs, **kwargs)
        except (InfeasibleKError, FitFailedError) as exc:
            errors.append(f"K={K}: {exc}")
            log.info("select_k: K=%d skipped (%s)", K, exc)
    if not fits:
        raise FitFailedError("no K in the range could be fitted", errors)
    score = {K: (f.noise_bic if criterion == "noise" else f.bic) for K, f in fits.items()}
    best_k = min(fits, key=lambda K: (score[K], K))
    return replace(fits[best_k], bic_by_k=score)
