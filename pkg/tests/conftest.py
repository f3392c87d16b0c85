import numpy as np
import pytest

from irgaflux.rotation import Dataset
from irgaflux.synthetic import ScenarioSpec, generate


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def covariate_scenario():
    spec = ScenarioSpec(
        family="covariate_adjust", n=80, p=2, q=6, lam=0.3, psi=1.0, sigma2=1.0, seed=7
    )
    return generate(spec)


@pytest.fixture
def small_dataset(rng):
    n, p = 40, 3
    X = rng.standard_normal((n, p))
    beta = np.array([1.5, 0.0, -1.0])
    y = X @ beta + rng.standard_normal(n)
    return Dataset(y=y, X=X, sigma2=1.0)
