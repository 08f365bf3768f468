from dataclasses import replace

import numpy as np
import pytest

import srmr.fit as fitmod
from srmr.exceptions import FitFailedError, InfeasibleKError, InvalidParameterError, SRMRError
from srmr.fit import FitOptions, default_n0, initial_subsets, select_k, srmr_fit
from srmr.metrics import evaluate
from srmr.robust import ols
from srmr.simgen import DEFAULT, generate


@pytest.fixture(scope="module")
def default_fit():
    lds = generate(replace(DEFAULT, seed=11))
    return lds, srmr_fit(lds.data, 2, seed=11)


def test_options_validation():
    for bad in (dict(lam=1.5), dict(alpha=0.5), dict(J=0), dict(cutoff=0.0)):
        with pytest.raises(InvalidParameterError):
            FitOptions(**bad)


def test_default_n0():
    assert default_n0(200, 2, 1) == 50
    assert default_n0(10, 4, 1) == 3
    assert default_n0(7, 1, 3) == 5


def test_initial_subsets_are_local(rng):
    S = np.r_[rng.normal(size=(50, 2)) * 0.1 + 5, rng.normal(size=(50, 2)) * 0.1 - 5]
    subs = initial_subsets(S, 2, 40, np.random.default_rng(0))
    assert [s.size for s in subs] == [40, 40]
    sides = sorted(int(np.all(s < 50)) for s in subs)
    assert sides == [0, 1]


def test_fit_invariants(default_fit):
    lds, fit = default_fit
    a = fit.assignment
    assert np.intersect1d(a.type1, a.type2).size == 0
    np.testing.assert_array_equal(np.flatnonzero(a.labels == 0), np.union1d(a.type1, a.type2))
    assert 1 <= fit.iterations <= FitOptions().L0
    assert np.isfinite(fit.bic) and np.isfinite(fit.noise_bic)
    assert fit.model.pis.sum() == pytest.approx(1.0)


def test_fit_self_consistent_m_step(default_fit):
    lds, fit = default_fit
    ds = lds.data
    for k in range(fit.K):
        rows = np.flatnonzero(fit.cluster_labels == k)
        assert not np.intersect1d(rows, fit.type1).size
        np.testing.assert_allclose(ols(ds.y[rows], ds.X[rows]).beta, fit.model.betas[k], atol=1e-9)


def test_fit_recovers_default(default_fit):
    lds, fit = default_fit
    rep = evaluate(fit, lds)
    assert rep.ri > 0.9 and rep.acc >= 0.9 and rep.pce < 0.05


def test_fit_is_deterministic_and_parallel_invariant(default_fit):
    lds, fit = default_fit
    again = srmr_fit(lds.data, 2, seed=11)
    par = srmr_fit(lds.data, 2, seed=11, n_jobs=2)
    for other in (again, par):
        np.testing.assert_array_equal(other.labels, fit.labels)
        np.testing.assert_array_equal(other.type1, fit.type1)
        np.testing.assert_array_equal(other.type2, fit.type2)
        np.testing.assert_array_equal(other.model.betas, fit.model.betas)
        assert other.bic == fit.bic


def test_fit_keyword_overrides(default_fit):
    lds, _ = default_fit
    fit = srmr_fit(lds.data, 2, seed=0, J=1, L0=3)
    assert fit.n_starts == 1 and fit.start_index == 0
    assert fit.iterations <= 3


@pytest.fixture(scope="module")
def clean_runs():
    shares, errs = [], []
    for seed in range(20):
        lds = generate(replace(DEFAULT, mixing=(0.5, 0.5, 0.0), seed=seed))
        fit = srmr_fit(lds.data, 2, seed=seed)
        shares.append(fit.assignment.outliers.size / lds.n)
        B = np.array(lds.true_betas)
        errs.append(np.abs(fit.model.betas[:, None, :] - B[None]).max(axis=2).min(axis=0).max())
    return np.array(shares), np.array(errs)


def test_fit_clean_default_flags_few_rows(clean_runs):
    # rows where the two lines cross are ambiguous for the vote, so a couple of
    # flags per dataset are expected; the average stays within 2% of N
    shares, errs = clean_runs
    assert np.mean(shares) <= 0.02
    assert errs.max() < 0.1


@pytest.mark.xfail(strict=True, reason="the Type-2 vote flags rows near the line crossing; "
                                       "several seeds exceed 2% of N individually")
def test_fit_clean_default_flags_few_rows_every_seed(clean_runs):
    shares, _ = clean_runs
    assert shares.max() <= 0.02


def test_fit_detects_type1_outliers():
    lds = generate(replace(DEFAULT, mixing=(0.4, 0.4, 0.2), seed=5))
    rep = evaluate(srmr_fit(lds.data, 2, seed=5), lds)
    assert rep.acc >= 0.9


def test_fit_detects_reversed_coordinates():
    for seed in range(6):
        lds = generate(replace(DEFAULT, mixing=(0.5, 0.5, 0.0), type2_rate=0.1, seed=seed))
        fit = srmr_fit(lds.data, 2, seed=seed)
        found = np.intersect1d(fit.assignment.outliers, lds.true_type2).size
        assert found >= 0.9 * lds.true_type2.size


def test_fit_infeasible_and_failed(default_fit, monkeypatch):
    lds, _ = default_fit
    small = lds.data.subset(np.arange(5))
    with pytest.raises(InfeasibleKError):
        srmr_fit(small, 2)

    def boom(*args, **kwargs):
        raise SRMRError("synthetic failure")

    monkeypatch.setattr(fitmod, "_run_start", boom)
    with pytest.raises(FitFailedError) as info:
        srmr_fit(lds.data, 2, J=3)
    assert len(info.value.diagnostics) == 3


def test_select_k_single_value(default_fit):
    lds, fit = default_fit
    sel = select_k(lds.data, [2], seed=11)
    assert sel.K == 2
    np.testing.assert_array_equal(sel.labels, fit.labels)
    assert set(sel.bic_by_k) == {2}


def test_select_k_criteria_and_errors(default_fit):
    lds, _ = default_fit
    sel = select_k(lds.data, [1, 2], seed=11, J=3)
    assert sel.K == 2
    assert sel.bic_by_k[2] < sel.bic_by_k[1]
    tr = select_k(lds.data, [1, 2], seed=11, J=3, criterion="trimmed")
    assert set(tr.bic_by_k) == {1, 2}
    with pytest.raises(InvalidParameterError):
        select_k(lds.data, [], seed=0)
    with pytest.raises(InvalidParameterError):
        select_k(lds.data, [1], criterion="aic")
    with pytest.raises(FitFailedError):
        select_k(lds.data.subset(np.arange(5)), [2, 3])
