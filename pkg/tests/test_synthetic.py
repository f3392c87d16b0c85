import msgspec
import numpy as np
import pytest

from irgaflux.exceptions import ConfigError
from irgaflux.io import read_dataset_csv
from irgaflux.synthetic import (
    GP_SIGNAL,
    ScenarioSpec,
    export_csv,
    generate,
    generate_sequence,
    toeplitz_rows,
)


def test_gp_scenario():
    scenario = generate(ScenarioSpec(family="gp", n=100, p=3, rho=0.9, seed=1))
    data, truth = scenario
    assert data.X.shape == (100, 3)
    np.testing.assert_array_equal(data.Z[:, 0], data.X[:, 0])
    np.testing.assert_array_equal(truth.beta, GP_SIGNAL)
    np.testing.assert_allclose(truth.eta, truth.F**2)
    assert data.sigma2 == 1.0


def test_generation_is_deterministic():
    spec = ScenarioSpec(family="covariate_adjust", n=50, p=2, q=4, seed=3)
    first, second = generate(spec), generate(spec)
    np.testing.assert_array_equal(first.data.y, second.data.y)
    np.testing.assert_array_equal(first.truth.alpha, second.truth.alpha)
    other = generate(msgspec.structs.replace(spec, seed=4))
    assert not np.array_equal(first.data.y, other.data.y)


def test_zero_signal_has_empty_support():
    scenario = generate(
        ScenarioSpec(family="covariate_adjust", n=30, p=3, q=2, signal=[0.0, 0.0, 0.0])
    )
    assert scenario.truth.gamma == ()


def test_selection_scenario():
    scenario = generate(ScenarioSpec(family="selection", n=60, r=8, lam=0.5, seed=2))
    assert scenario.data.X.shape == (60, 8)
    assert scenario.data.Z is None
    assert scenario.truth.gamma == tuple(np.flatnonzero(scenario.truth.beta))


def test_unknown_sigma2_is_hidden():
    spec = ScenarioSpec(family="covariate_adjust", n=30, p=1, q=2, known_sigma2=False)
    assert generate(spec).data.sigma2 is None


def test_gaussian_nuisance_carries_its_covariance():
    scenario = generate(ScenarioSpec(family="gaussian_nuisance", n=20, p=1, q=5, psi=2.0))
    data, truth = scenario
    np.testing.assert_allclose(truth.nuisance_covariance, 2.0 * data.Z @ data.Z.T)


def test_toeplitz_correlation(rng):
    rows = toeplitz_rows(200_000, 3, 0.9, rng)
    corr = np.corrcoef(rows, rowvar=False)
    np.testing.assert_allclose(corr[0, 1], 0.9, atol=0.01)
    np.testing.assert_allclose(corr[0, 2], 0.81, atol=0.01)


def test_nested_sequence():
    spec = ScenarioSpec(family="consistency", p=4, q=3, nuisance_signal=[0.5, -0.5, 0.0])
    small, large = generate_sequence(spec, [50, 200])
    np.testing.assert_array_equal(small.data.y, large.data.y[:50])
    np.testing.assert_array_equal(small.truth.beta, [1.0, -1.0, 1.0, 0.0])


@pytest.mark.parametrize(
    "family, rho", [("gp", 0.9), ("selection", 0.0), ("covariate_adjust", 0.0)]
)
def test_rho_defaults_per_family(family, rho):
    assert ScenarioSpec(family=family, r=4, q=2).rho == rho
    assert ScenarioSpec(family=family, r=4, q=2, rho=0.3).rho == 0.3


def test_gp_default_matches_correlated_design():
    explicit = generate(ScenarioSpec(family="gp", rho=0.9, seed=2))
    default = generate(ScenarioSpec(family="gp", seed=2))
    np.testing.assert_array_equal(default.data.X, explicit.data.X)
    np.testing.assert_array_equal(default.data.y, explicit.data.y)


def test_nuisance_correlation_ties_z_to_x():
    base = ScenarioSpec(family="covariate_adjust", n=2000, p=2, q=3, seed=4)
    independent = generate(base).data
    tied = generate(msgspec.structs.replace(base, nuisance_correlation=0.8)).data

    def explained(data):
        coef, *_ = np.linalg.lstsq(data.X, data.Z, rcond=None)
        return np.sum((data.X @ coef) ** 2, axis=0) / np.sum(data.Z**2, axis=0)

    assert np.all(explained(independent) < 0.02)
    np.testing.assert_allclose(explained(tied), 0.64, atol=0.06)
    np.testing.assert_array_equal(tied.X, independent.X)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"family": "selection", "r": 1},
        {"family": "covariate_adjust", "q": 0},
        {"family": "gp", "rho": 1.0},
        {"family": "gp", "sigma2": 0.0},
        {"family": "gp", "p": 2, "signal": [1.0]},
        {"family": "consistency", "q": 2, "nuisance_signal": [1.0]},
        {"family": "gp", "n": 2, "p": 3},
        {"family": "covariate_adjust", "q": 2, "nuisance_correlation": -1.0},
    ],
)
def test_spec_validation(kwargs):
    with pytest.raises(ConfigError):
        ScenarioSpec(**kwargs)


def test_export_csv(tmp_path):
    scenario = generate(ScenarioSpec(family="covariate_adjust", n=15, p=2, q=3))
    path = str(tmp_path / "scenario.csv")
    export_csv(scenario, path)
    loaded = read_dataset_csv(path)
    np.testing.assert_array_equal(loaded.data.y, scenario.data.y)
    assert loaded.z_names == ["z_1", "z_2", "z_3"]
