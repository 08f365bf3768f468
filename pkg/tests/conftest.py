import numpy as np
import pytest

from srmr.core import MixtureModel, SpatialDataset


def random_dataset(rng, n=None, p=1):
    n = n if n is not None else int(rng.integers(3, 40))
    x = rng.normal(size=(n, p))
    y = rng.normal(scale=3.0, size=n)
    S = rng.normal(scale=2.0, size=(n, 2))
    return SpatialDataset.from_predictors(y, x, S)


def random_model(rng, K=None, p=1, lam=None):
    K = K if K is not None else int(rng.integers(1, 5))
    pis = rng.dirichlet(np.ones(K))
    pis = np.maximum(pis, 1e-6)
    pis /= pis.sum()
    return MixtureModel.from_arrays(
        pis,
        rng.normal(scale=2.0, size=(K, p + 1)),
        rng.uniform(0.01, 4.0, size=K),
        rng.normal(scale=2.0, size=(K, 2)),
        lam=float(rng.uniform()) if lam is None else lam,
        tau2=float(rng.uniform(0.05, 5.0)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
