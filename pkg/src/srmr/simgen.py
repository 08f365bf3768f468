"""Synthetic spatial mixture-regression data with known ground truth.

Each component k draws ``x ~ U(-2, 2)``, ``y = a_k + b_k x + N(0, sigma_k^2)``
and coordinates around its own center.  Regression outliers (Type 1) are
rejection-sampled from ``(U(-2, 2), U(-8, 8))`` until they sit more than two
units (Euclidean) from every true line; spatial outliers (Type 2) are inlier
rows whose coordinates get negated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import SpatialDataset
from .exceptions import GenerationStuckError, InvalidParameterError, UnknownPresetError

LAYOUTS = ("normal-diagonal", "normal-horizontal", "uniform")
DIAGONAL_CENTERS = ((1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0))
HORIZONTAL_CENTERS = ((0.5, 0.0), (-0.5, 0.0), (0.0, 0.5), (0.0, -0.5))
DEFAULT_BETAS = ((1.5, 1.0), (1.5, -1.2), (1.5, -0.8), (1.5, 0.5))
OUTLIER_DISTANCE = 2.0
MAX_PROPOSALS = 10**6


@dataclass(frozen=True)
class ScenarioConfig:
    """One synthetic setting.

    ``betas`` are (intercept, slope) pairs; ``mixing`` has K + 1 entries, the
    last being the share of rows generated as Type-1 outliers.  ``type1_rate``
    and ``type2_rate`` apply extra injections on top (rates relative to the
    current row count).
    """

    K: int = 2
    N: int = 200
    betas: tuple = DEFAULT_BETAS[:2]
    sigmas: tuple = (0.1, 0.1)
    mixing: tuple = (0.4, 0.4, 0.2)
    spatial_layout: str = "normal-diagonal"
    spatial_cov: tuple = (0.1, 0.1)
    type1_rate: float = 0.0
    type2_rate: float = 0.0
    seed: int = 0
    name: str = "default"

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(tuple(float(v) for v in b) for b in self.betas))
        object.__setattr__(self, "sigmas", tuple(float(s) for s in self.sigmas))
        object.__setattr__(self, "mixing", tuple(float(m) for m in self.mixing))
        object.__setattr__(self, "spatial_cov", tuple(float(c) for c in self.spatial_cov))
        self.validate()

    def validate(self):
        K = self.K
        if K < 1 or K > len(DIAGONAL_CENTERS):
            raise InvalidParameterError(f"K must lie in 1..{len(DIAGONAL_CENTERS)}")
        if self.N < 1:
            raise InvalidParameterError("N must be positive")
        if len(self.betas) != K or len(self.sigmas) != K:
            raise InvalidParameterError("betas and sigmas need exactly K entries")
        if any(len(b) != 2 for b in self.betas):
            raise InvalidParameterError("each beta must be an (intercept, slope) pair")
        if any(s < 0 for s in self.sigmas):
            raise InvalidParameterError("noise levels must be non-negative")
        if len(self.mixing) != K + 1 or any(m < 0 for m in self.mixing):
            raise InvalidParameterError("mixing needs K + 1 non-negative entries")
        if abs(math.fsum(self.mixing) - 1.0) > 1e-9:
            raise InvalidParameterError("mixing proportions must sum to 1")
        if self.mixing[-1] >= 0.5:
            raise InvalidParameterError("outlier share must stay below 0.5")
        if self.spatial_layout not in LAYOUTS:
            raise InvalidParameterError(f"spatial_layout must be one of {LAYOUTS}")
        if len(self.spatial_cov) != 2 or any(c <= 0 for c in self.spatial_cov):
            raise InvalidParameterError("spatial_cov needs two positive diagonal entries")
        for r in (self.type1_rate, self.type2_rate):
            if not 0.0 <= r < 0.5:
                raise InvalidParameterError("outlier rates must lie in [0, 0.5)")

    @property
    def centers(self) -> np.ndarray:
        base = HORIZONTAL_CENTERS if self.spatial_layout == "normal-horizontal" else DIAGONAL_CENTERS
        return np.array(base[: self.K])

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "K": self.K,
            "N": self.N,
            "betas": [list(b) for b in self.betas],
            "sigmas": list(self.sigmas),
            "mixing": list(self.mixing),
            "spatial_layout": self.spatial_layout,
            "spatial_cov": list(self.spatial_cov),
            "type1_rate": self.type1_rate,
            "type2_rate": self.type2_rate,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__) - {"slopes"}
        if unknown:
            raise InvalidParameterError(f"unknown scenario keys: {sorted(unknown)}")
        if "slopes" in d:
            if "betas" in d:
                raise InvalidParameterError("give either betas or slopes, not both")
            d["betas"] = tuple((0.0, float(s)) for s in d.pop("slopes"))
        return cls(**d)


@dataclass(frozen=True)
class LabeledDataset:
    """Generated data plus ground truth.

    ``components`` keeps the regression component (1-based) of every row that
    was generated from a line, including rows later turned into Type-2
    outliers; Type-1 rows carry 0.
    """

    data: SpatialDataset
    true_labels: np.ndarray
    true_type1: np.ndarray
    true_type2: np.ndarray
    true_betas: tuple
    components: np.ndarray

    @property
    def n(self) -> int:
        return self.data.n


def largest_remainder(total: int, shares: Sequence[float]) -> np.ndarray:
    raw = np.asarray(shares, dtype=float) * total
    counts = np.floor(raw).astype(int)
    rem = total - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:rem]] += 1
    return counts


def point_line_distance(x, y, intercept, slope):
    return np.abs(y - intercept - slope * x) / math.sqrt(1.0 + slope * slope)


def _type1_points(count, betas, rng):
    xs, ys = [], []
    proposals = 0
    while len(xs) < count:
        if proposals >= MAX_PROPOSALS:
            raise GenerationStuckError(f"rejection sampler made no progress after {proposals} proposals")
        batch = max(64, 4 * (count - len(xs)))
        px = rng.uniform(-2.0, 2.0, size=batch)
        py = rng.uniform(-8.0, 8.0, size=batch)
        proposals += batch
        ok = np.ones(batch, dtype=bool)
        for a, b in betas:
            ok &= point_line_distance(px, py, a, b) > OUTLIER_DISTANCE
        for i in np.flatnonzero(ok):
            if len(xs) == count:
                break
            xs.append(px[i])
            ys.append(py[i])
    return np.array(xs), np.array(ys)


def _coords(cfg, k, count, rng):
    mu = cfg.centers[k]
    cov = np.asarray(cfg.spatial_cov)
    if cfg.spatial_layout == "uniform":
        half = np.sqrt(3.0 * cov)
        return mu + rng.uniform(-1.0, 1.0, size=(count, 2)) * half
    return mu + rng.standard_normal((count, 2)) * np.sqrt(cov)


def _append_type1(lds, count, rng):
    if count == 0:
        return lds
    xs, ys = _type1_points(count, lds.true_betas, rng)
    S = lds.data.S
    lo, hi = S.min(axis=0), S.max(axis=0)
    coords = lo + rng.uniform(0.0, 1.0, size=(count, 2)) * (hi - lo)
    n = lds.n
    X = np.column_stack([np.ones(count), xs])
    data = SpatialDataset(
        y=np.concatenate([lds.data.y, ys]),
        X=np.vstack([lds.data.X, X]),
        S=np.vstack([S, coords]),
    )
    return replace(
        lds,
        data=data,
        true_labels=np.concatenate([lds.true_labels, np.zeros(count, dtype=np.intp)]),
        true_type1=np.concatenate([lds.true_type1, np.arange(n, n + count)]),
        components=np.concatenate([lds.components, np.zeros(count, dtype=np.intp)]),
    )


def _streams(seed):
    ss = np.random.SeedSequence(int(seed))
    return [np.random.default_rng(s) for s in ss.spawn(4)]


def generate(cfg: ScenarioConfig) -> LabeledDataset:
    """Draw one dataset for ``cfg``; a pure function of the config (seed included)."""
    g_in, g_bucket, g_t1, g_t2 = _streams(cfg.seed)
    counts = largest_remainder(cfg.N, cfg.mixing)
    ys, xs, Ss, labs = [], [], [], []
    for k in range(cfg.K):
        m = int(counts[k])
        a, b = cfg.betas[k]
        x = g_in.uniform(-2.0, 2.0, size=m)
        y = a + b * x + cfg.sigmas[k] * g_in.standard_normal(m)
        ys.append(y)
        xs.append(x)
        Ss.append(_coords(cfg, k, m, g_in))
        labs.append(np.full(m, k + 1, dtype=np.intp))
    y = np.concatenate(ys)
    x = np.concatenate(xs)
    S = np.vstack(Ss)
    lab = np.concatenate(labs)
    perm = g_in.permutation(y.shape[0])
    lds = LabeledDataset(
        data=SpatialDataset.from_predictors(y[perm], x[perm], S[perm]),
        true_labels=lab[perm],
        true_type1=np.empty(0, dtype=np.intp),
        true_type2=np.empty(0, dtype=np.intp),
        true_betas=cfg.betas,
        components=lab[perm].copy(),
    )
    lds = _append_type1(lds, int(counts[-1]), g_bucket)
    if cfg.type1_rate > 0:
        lds = inject_type1(lds, cfg.type1_rate, g_t1)
    if cfg.type2_rate > 0:
        lds = inject_type2(lds, cfg.type2_rate, g_t2)
    return lds


def inject_type1(lds: LabeledDataset, rate: float, seed) -> LabeledDataset:
    """Append ``round(rate * N)`` regression outliers; coordinates uniform over the current bounding box."""
    if not 0.0 <= rate < 0.5:
        raise InvalidParameterError("rate must lie in [0, 0.5)")
    rng = np.random.default_rng(seed)
    return _append_type1(lds, int(round(rate * lds.n)), rng)


def inject_type2(lds: LabeledDataset, rate: float, seed) -> LabeledDataset:
    """Negate the coordinates of ``round(rate * N)`` randomly chosen inlier rows."""
    if not 0.0 <= rate < 0.5:
        raise InvalidParameterError("rate must lie in [0, 0.5)")
    count = int(round(rate * lds.n))
    if count == 0:
        return lds
    rng = np.random.default_rng(seed)
    pool = np.flatnonzero(lds.true_labels > 0)
    if count > pool.size:
        raise InvalidParameterError("not enough inlier rows to reverse")
    rows = np.sort(rng.choice(pool, size=count, replace=False))
    S = lds.data.S.copy()
    S[rows] = -S[rows]
    labels = lds.true_labels.copy()
    labels[rows] = 0
    return replace(
        lds,
        data=SpatialDataset(lds.data.y, lds.data.X, S, lds.data.ids),
        true_labels=labels,
        true_type2=np.union1d(lds.true_type2, rows),
    )


def reverse_coordinates(S, rows):
    """Negate the coordinates of ``rows``; applying it twice is the identity."""
    S = np.array(S, dtype=float)
    S[rows] = -S[rows]
    return S


DEFAULT = ScenarioConfig()


def _k_config(K):
    inlier = 0.8 / K
    return replace(
        DEFAULT,
        K=K,
        betas=DEFAULT_BETAS[:K],
        sigmas=(0.1,) * K,
        mixing=(inlier,) * K + (0.2,),
        name=f"components K={K}",
    )


def _slopes(pair):
    return tuple((0.0, float(s)) for s in pair)


PRESETS = {
    "components": lambda: [_k_config(K) for K in (2, 3, 4)],
    "sample-size": lambda: [replace(DEFAULT, N=n, name=f"sample-size N={n}") for n in (100, 200, 400)],
    "noise": lambda: [replace(DEFAULT, sigmas=(s, s), name=f"noise sigma={s}") for s in (0.1, 0.2, 0.5)],
    "mixing": lambda: [
        replace(DEFAULT, mixing=m, name=f"mixing {m}")
        for m in ((0.4, 0.4, 0.2), (0.5, 0.3, 0.2), (0.6, 0.2, 0.2))
    ],
    "coefficients": lambda: [
        replace(DEFAULT, betas=_slopes(b), name=f"coefficients slopes={b}")
        for b in ((1.5, 1.0), (1.5, 0.1), (1.5, -1.2))
    ],
    "type1": lambda: [
        replace(DEFAULT, mixing=((1 - r) / 2, (1 - r) / 2, r), name=f"type1 rate={r}")
        for r in (0.1, 0.2)
    ],
    "type2": lambda: [
        replace(DEFAULT, mixing=(0.5, 0.5, 0.0), type2_rate=r, name=f"type2 rate={r}")
        for r in (0.1, 0.2)
    ],
    "shape": lambda: [
        replace(DEFAULT, spatial_layout=lay, name=f"shape {lay}")
        for lay in ("normal-diagonal", "uniform")
    ],
    "center": lambda: [
        replace(DEFAULT, spatial_layout=lay, name=f"center {lay}")
        for lay in ("normal-diagonal", "normal-horizontal")
    ],
    "density": lambda: [
        replace(DEFAULT, spatial_cov=c, name=f"density cov={c}")
        for c in ((0.1, 0.1), (0.5, 0.1))
    ],
}


def preset_names():
    return tuple(PRESETS)


def preset(name: str) -> list:
    """Parameter grid of a named perturbation scenario (everything else at defaults)."""
    try:
        return PRESETS[name]()
    except KeyError:
        raise UnknownPresetError(name, PRESETS) from None


def with_seed(cfg: ScenarioConfig, seed: int) -> ScenarioConfig:
    return replace(cfg, seed=int(seed))
