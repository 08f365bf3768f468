import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from conftest import random_dataset, random_model
from srmr.core import (
    Assignment,
    MixtureModel,
    SpatialDataset,
    bic,
    default_tau2,
    gaussian_density,
    hybrid_posterior,
    n_free_parameters,
    noise_bic,
    noise_loglik,
    regression_posterior,
    row_loglik,
    spatial_posterior_from_coords,
    trimmed_loglik,
)
from srmr.exceptions import EmptyLikelihoodError, InvalidParameterError


# ---------------------------------------------------------------- dataset

def test_dataset_adds_intercept_and_is_read_only():
    ds = SpatialDataset.from_predictors([1.0, 2.0], [0.5, 1.5], [[0, 0], [1, 1]])
    assert ds.n == 2 and ds.p == 1
    np.testing.assert_array_equal(ds.X[:, 0], [1.0, 1.0])
    with pytest.raises(ValueError):
        ds.y[0] = 5.0


@pytest.mark.parametrize("y, X, S", [
    ([1.0, 2.0], [[1.0, 0.0]], [[0, 0], [1, 1]]),
    ([1.0], [[2.0, 0.0]], [[0, 0]]),
    ([np.nan], [[1.0, 0.0]], [[0, 0]]),
    ([1.0], [[1.0, 0.0]], [[0, np.inf]]),
    ([], np.empty((0, 2)), np.empty((0, 2))),
])
def test_dataset_rejects_invalid_input(y, X, S):
    with pytest.raises(InvalidParameterError):
        SpatialDataset(y, X, S)


def test_model_validation():
    with pytest.raises(InvalidParameterError):
        MixtureModel.from_arrays([0.5, 0.6], [[0, 1], [0, 1]], [1, 1], [[0, 0], [1, 1]])
    with pytest.raises(InvalidParameterError):
        MixtureModel.from_arrays([1.0], [[0, 1]], [0.0], [[0, 0]])
    with pytest.raises(InvalidParameterError):
        MixtureModel.from_arrays([1.0], [[0, 1]], [1.0], [[0, 0]], lam=1.5)
    with pytest.raises(InvalidParameterError):
        MixtureModel.from_arrays([1.0], [[0, 1]], [1.0], [[0, 0]], tau2=0.0)


def test_assignment_invariants():
    a = Assignment(labels=[1, 0, 2, 0], type1=[1], type2=[3])
    np.testing.assert_array_equal(a.outliers, [1, 3])
    with pytest.raises(InvalidParameterError):
        Assignment(labels=[0, 0], type1=[0], type2=[0, 1])
    with pytest.raises(InvalidParameterError):
        Assignment(labels=[1, 0], type1=[], type2=[])
    with pytest.raises(InvalidParameterError):
        Assignment(labels=[1, 1], type1=[0])


# ---------------------------------------------------------------- densities

@pytest.mark.parametrize("r, s2, expected", [
    (0.0, 1.0, 0.3989422804),
    (1.0, 1.0, 0.2419707245),
    (2.0, 4.0, 0.1209853623),
])
def test_gaussian_density_examples(r, s2, expected):
    assert gaussian_density(r, s2) == pytest.approx(expected, abs=1e-10)


@given(st.floats(-30, 30), st.floats(1e-3, 1e3))
def test_gaussian_density_matches_scipy(r, s2):
    ref = max(norm.pdf(r, scale=math.sqrt(s2)), 1e-300)
    assert gaussian_density(r, s2) == pytest.approx(ref, rel=1e-12)


def test_gaussian_density_floor_and_errors():
    assert gaussian_density(1e6, 1.0) == 1e-300
    for bad in (0.0, -1.0):
        with pytest.raises(InvalidParameterError):
            gaussian_density(0.0, bad)


# ---------------------------------------------------------------- posteriors

def test_regression_posterior_single_component(rng):
    ds = random_dataset(rng, n=15)
    m = MixtureModel.from_arrays([1.0], [[0.3, -1.0]], [0.5], [[0, 0]])
    np.testing.assert_array_equal(regression_posterior(ds, m), np.ones((15, 1)))


def test_regression_posterior_identical_components(rng):
    ds = random_dataset(rng, n=10)
    m = MixtureModel.from_arrays([0.5, 0.5], [[1, 2], [1, 2]], [0.3, 0.3], [[0, 0], [5, 5]])
    np.testing.assert_allclose(regression_posterior(ds, m), 0.5, atol=1e-15)


def test_regression_posterior_separating_row():
    ds = SpatialDataset.from_predictors([1.5], [[1.0]], [[0, 0]])
    m = MixtureModel.from_arrays([0.5, 0.5], [[0, 1.5], [0, -1.2]], [0.01, 0.01],
                                 [[0, 0], [1, 1]])
    np.testing.assert_allclose(regression_posterior(ds, m)[0], [1.0, 0.0], atol=1e-6)


def test_regression_posterior_underflow_falls_back_to_uniform():
    ds = SpatialDataset.from_predictors([1e4, 0.0], [[0.0], [0.0]], [[0, 0], [1, 1]])
    m = MixtureModel.from_arrays([0.3, 0.7], [[0, 0], [0, 1]], [1e-4, 1e-4], [[0, 0], [1, 1]])
    post, fallbacks = regression_posterior(ds, m, return_fallbacks=True)
    assert fallbacks == 1
    np.testing.assert_array_equal(post[0], [0.5, 0.5])
    assert post[1].sum() == pytest.approx(1.0)


def test_spatial_posterior_examples():
    W = np.array([[1.0, 1.0], [-1.0, -1.0]])
    np.testing.assert_allclose(spatial_posterior_from_coords([[0.0, 0.0]], W, 1.0), [[0.5, 0.5]],
                               atol=1e-15)
    assert spatial_posterior_from_coords([[1.0, 1.0]], W, 1.0)[0, 0] > 0.5
    # equidistant from four centroids
    W4 = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]], dtype=float)
    np.testing.assert_allclose(spatial_posterior_from_coords([[0.0, 0.0]], W4, 0.7), 0.25,
                               atol=1e-15)


def test_spatial_posterior_matches_hand_softmax():
    S = np.array([[0.3, -0.2]])
    W = np.array([[1.0, 1.0], [-1.0, 0.5], [2.0, -2.0]])
    tau2 = 0.8
    d2 = ((S - W) ** 2).sum(axis=1)
    e = np.exp(-d2 / (2 * tau2))
    np.testing.assert_allclose(spatial_posterior_from_coords(S, W, tau2)[0], e / e.sum(),
                               rtol=1e-13)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_posteriors_row_stochastic_and_lambda_endpoints(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng)
    m = random_model(rng)
    hyb, p_reg, p_spa = hybrid_posterior(ds, m)
    for P in (hyb, p_reg, p_spa):
        assert np.all(P >= 0) and np.all(P <= 1)
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_array_equal(hyb, (1 - m.lam) * p_reg + m.lam * p_spa)
    m0 = MixtureModel(m.components, 0.0, m.tau2)
    m1 = MixtureModel(m.components, 1.0, m.tau2)
    np.testing.assert_array_equal(hybrid_posterior(ds, m0)[0], p_reg)
    np.testing.assert_array_equal(hybrid_posterior(ds, m1)[0], p_spa)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-50, 50), st.floats(-50, 50))
def test_spatial_posterior_translation_invariant(seed, dx, dy):
    rng = np.random.default_rng(seed)
    S = rng.normal(size=(12, 2))
    W = rng.normal(size=(3, 2))
    shift = np.array([dx, dy])
    np.testing.assert_allclose(spatial_posterior_from_coords(S + shift, W + shift, 0.9),
                               spatial_posterior_from_coords(S, W, 0.9), atol=1e-9)


def test_regression_posterior_relabel_equivariant(rng):
    ds = random_dataset(rng, n=25)
    m = random_model(rng, K=4)
    perm = np.array([2, 0, 3, 1])
    mp = MixtureModel(tuple(m.components[i] for i in perm), m.lam, m.tau2)
    np.testing.assert_allclose(regression_posterior(ds, mp), regression_posterior(ds, m)[:, perm],
                               rtol=1e-12)


# ---------------------------------------------------------------- likelihood and BIC

def test_trimmed_loglik_single_exact_row():
    ds = SpatialDataset.from_predictors([2.0], [[1.0]], [[0, 0]])
    m = MixtureModel.from_arrays([1.0], [[1.0, 1.0]], [1.0], [[0, 0]])
    ll = trimmed_loglik(ds, m, Assignment(labels=[1]))
    assert ll == pytest.approx(math.log(0.3989422804), abs=1e-9)
    assert ll == pytest.approx(-0.9189385, abs=1e-7)


def test_trimmed_loglik_three_rows():
    ds = SpatialDataset.from_predictors([0.0, 1.0, -1.0], [[0.0], [0.0], [0.0]], np.zeros((3, 2)))
    m = MixtureModel.from_arrays([1.0], [[0.0, 0.0]], [1.0], [[0, 0]])
    ll = trimmed_loglik(ds, m, Assignment(labels=[1, 1, 1]))
    assert ll == pytest.approx(-3 * 0.9189385332 - 1.0, abs=1e-9)
    assert ll == pytest.approx(-3.7568, abs=1e-4)


def test_trimmed_loglik_skips_outliers_and_rejects_all_outliers():
    ds = SpatialDataset.from_predictors([0.0, 50.0], [[0.0], [0.0]], np.zeros((2, 2)))
    m = MixtureModel.from_arrays([1.0], [[0.0, 0.0]], [1.0], [[0, 0]])
    ll = trimmed_loglik(ds, m, Assignment(labels=[1, 0], type1=[1]))
    assert ll == pytest.approx(-0.9189385332, abs=1e-9)
    with pytest.raises(EmptyLikelihoodError):
        trimmed_loglik(ds, m, Assignment(labels=[0, 0], type1=[0, 1]))


def test_row_loglik_matches_direct_mixture(rng):
    ds = random_dataset(rng, n=30)
    m = random_model(rng, K=3)
    r = ds.y[:, None] - ds.X @ m.betas.T
    direct = np.log((m.pis * norm.pdf(r, scale=np.sqrt(m.sigma2s))).sum(axis=1))
    np.testing.assert_allclose(row_loglik(ds, m), direct, rtol=1e-10)


def test_bic_examples():
    assert n_free_parameters(1, 1) == 3
    assert bic(0.0, 1, 1, 3) == pytest.approx(3 * math.log(3))
    assert bic(0.0, 1, 1, 3) == pytest.approx(3.2958, abs=1e-4)
    assert bic(-10.0, 2, 1, 1) == 20.0
    assert n_free_parameters(2, 1) == 7


@given(st.floats(-1e4, 1e4), st.integers(1, 8), st.integers(1, 5), st.integers(2, 10**5))
def test_bic_penalty_monotone_in_k(ll, K, p, n):
    assert bic(ll, K + 1, p, n) > bic(ll, K, p, n)


def test_bic_rejects_empty():
    with pytest.raises(InvalidParameterError):
        bic(0.0, 1, 1, 0)


def test_noise_bic_charges_discarded_rows(rng):
    # rows with negative log-density: trimming them raises the trimmed
    # likelihood, but the noise criterion still prefers keeping them
    x = rng.uniform(-2, 2, 100)
    y = 1.0 + 2.0 * x + rng.normal(scale=0.1, size=100)
    ds = SpatialDataset.from_predictors(y, x[:, None], rng.normal(size=(100, 2)))
    m = MixtureModel.from_arrays([1.0], [[1.0, 2.0]], [1.0], [[0, 0]])
    full = Assignment(labels=np.ones(100, dtype=int))
    half = Assignment(labels=np.r_[np.ones(50, dtype=int), np.zeros(50, dtype=int)],
                      type1=np.arange(50, 100))
    assert trimmed_loglik(ds, m, half) > trimmed_loglik(ds, m, full)
    assert noise_bic(ds, m, full) < noise_bic(ds, m, half)
    assert noise_loglik(ds, m, full) == pytest.approx(trimmed_loglik(ds, m, full))


def test_default_tau2_small_case():
    S = np.array([[0.0, 0.0], [3.0, 4.0], [0.0, 8.0]])
    # pairwise distances 5, 8, 5 -> median 5
    assert default_tau2(S) == 25.0
    assert default_tau2(np.zeros((4, 2))) == 1.0


def test_default_tau2_subsample_is_seeded(rng):
    S = rng.normal(size=(800, 2))
    assert default_tau2(S, rng=3) == default_tau2(S, rng=3)
    assert default_tau2(S, rng=3) == pytest.approx(default_tau2(S[:500], rng=0), rel=0.2)
