"""Evaluation metrics: Rand index, adjusted Rand index, outlier accuracy and
coefficient error.

Outlier rows (label 0) are scored as one more cluster in RI/ARI.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import InvalidParameterError, UndefinedMetricError


class DegenerateMetricWarning(UserWarning):
    pass


def _labels(a, b):
    a = np.asarray(a).reshape(-1)
    b = np.asarray(b).reshape(-1)
    if a.shape != b.shape:
        raise InvalidParameterError("labelings differ in length")
    if a.shape[0] < 2:
        raise UndefinedMetricError("pair-counting metrics need at least two rows")
    return a, b


def _pair_counts(a, b):
    """Return (same-in-both, same-in-a, same-in-b, total pairs)."""
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    comb2 = lambda v: (v * (v - 1)) // 2
    n = a.shape[0]
    return (int(comb2(table).sum()), int(comb2(table.sum(axis=1)).sum()),
            int(comb2(table.sum(axis=0)).sum()), n * (n - 1) // 2)


def rand_index(a, b) -> float:
    a, b = _labels(a, b)
    both, sa, sb, total = _pair_counts(a, b)
    # agreeing pairs: same in both, or different in both
    agree = both + (total - sa - sb + both)
    return agree / total


def adjusted_rand_index(a, b) -> float:
    a, b = _labels(a, b)
    both, sa, sb, total = _pair_counts(a, b)
    expected = sa * sb / total
    maximum = 0.5 * (sa + sb)
    if maximum == expected:
        warnings.warn("adjusted Rand index has a zero denominator; returning 1.0",
                      DegenerateMetricWarning, stacklevel=2)
        return 1.0
    return (both - expected) / (maximum - expected)


@dataclass(frozen=True)
class OutlierAccuracy:
    overall: float
    type1: Optional[float]
    type2: Optional[float]


def outlier_acc(pred_type1, pred_type2, true_type1, true_type2) -> OutlierAccuracy:
    """Share of true outliers (either type) found among the predicted outliers (either type).

    The per-type entries use the same predicted union against each true set and
    are None when that true set is empty.
    """
    pred = np.union1d(np.asarray(pred_type1, dtype=np.intp), np.asarray(pred_type2, dtype=np.intp))
    t1 = np.unique(np.asarray(true_type1, dtype=np.intp))
    t2 = np.unique(np.asarray(true_type2, dtype=np.intp))
    truth = np.union1d(t1, t2)
    if truth.size == 0:
        raise UndefinedMetricError("no true outliers; accuracy is undefined")

    def frac(t):
        if t.size == 0:
            return None
        return np.intersect1d(pred, t).size / t.size

    return OutlierAccuracy(frac(truth), frac(t1), frac(t2))


def pce(true_betas, fitted_betas, bijective=False) -> float:
    """Sum over true coefficient vectors of the squared distance to the nearest fitted one.

    With ``bijective=True`` the matching is a one-to-one assignment instead
    (diagnostic only; needs at least as many fitted vectors as true ones).
    """
    T = np.atleast_2d(np.asarray(true_betas, dtype=float))
    P = np.atleast_2d(np.asarray(fitted_betas, dtype=float))
    if T.size == 0 or P.size == 0:
        raise InvalidParameterError("coefficient sequences must be non-empty")
    if T.shape[1] != P.shape[1]:
        raise InvalidParameterError("coefficient dimensions differ")
    D = ((T[:, None, :] - P[None, :, :]) ** 2).sum(axis=2)
    if not bijective:
        return float(D.min(axis=1).sum())
    if P.shape[0] < T.shape[0]:
        raise InvalidParameterError("bijective matching needs at least as many fitted vectors")
    from scipy.optimize import linear_sum_assignment

    r, c = linear_sum_assignment(D)
    return float(D[r, c].sum())


@dataclass(frozen=True)
class EvalReport:
    ri: float
    ari: float
    acc: Optional[float]
    acc_type1: Optional[float]
    acc_type2: Optional[float]
    pce: float

    def to_dict(self) -> dict:
        return {
            "RI": self.ri,
            "ARI": self.ari,
            "ACC": self.acc,
            "ACC_type1": self.acc_type1,
            "ACC_type2": self.acc_type2,
            "PCE": self.pce,
        }


def evaluate(fit, truth) -> EvalReport:
    """Score a `FitResult` against a `LabeledDataset`."""
    return evaluate_arrays(
        pred_labels=fit.assignment.labels,
        pred_type1=fit.assignment.type1,
        pred_type2=fit.assignment.type2,
        fitted_betas=fit.model.betas,
        true_labels=truth.true_labels,
        true_type1=truth.true_type1,
        true_type2=truth.true_type2,
        true_betas=truth.true_betas,
    )


def evaluate_arrays(pred_labels, pred_type1, pred_type2, fitted_betas,
                    true_labels, true_type1, true_type2, true_betas) -> EvalReport:
    pred_labels = np.asarray(pred_labels)
    true_labels = np.asarray(true_labels)
    if pred_labels.shape != true_labels.shape:
        raise InvalidParameterError("predicted and true labels differ in length")
    try:
        acc = outlier_acc(pred_type1, pred_type2, true_type1, true_type2)
    except UndefinedMetricError:
        acc = OutlierAccuracy(None, None, None)
    return EvalReport(
        ri=rand_index(true_labels, pred_labels),
        ari=adjusted_rand_index(true_labels, pred_labels),
        acc=acc.overall,
        acc_type1=acc.type1,
        acc_type2=acc.type2,
        pce=pce(true_betas, fitted_betas),
    )
