import numpy as np
import pytest

from helpers import conjugate_posterior, orthogonal_design
from irgaflux._private.executor import Executor
from irgaflux.estimators import NuisanceEstimator
from irgaflux.exact_posterior import NuisanceSummary, beta_posterior, exact_selection_oracle
from irgaflux.exceptions import ConfigError, DimensionMismatch, RankDeficient
from irgaflux.irga import IrgaResult, SelectionProblem, irga_fit, select_all, select_blocks
from irgaflux.priors import GaussianPrior, SpikeSlabPrior
from irgaflux.rotation import Dataset
from irgaflux.synthetic import ScenarioSpec, generate


def test_without_nuisance_gaussian_prior_is_conjugate(small_dataset):
    result = irga_fit(
        small_dataset, GaussianPrior.isotropic(3, 2.0), NuisanceEstimator.zero()
    )
    mean, cov = conjugate_posterior(small_dataset.X, small_dataset.y, 1.0, 2.0)
    np.testing.assert_allclose(result.posterior_mean(), mean, atol=1e-8)
    np.testing.assert_allclose(result.posterior_sd(), np.sqrt(np.diag(cov)), atol=1e-8)
    np.testing.assert_array_equal(result.inclusion_probs(), np.ones(3))
    assert np.all(np.isinf(result.inclusion_log_odds()))
    assert result.sigma2_used == 1.0
    assert set(result.timings) == {"rotation", "nuisance", "posterior"}


def test_known_gaussian_nuisance_is_exact():
    scenario = generate(
        ScenarioSpec(family="gaussian_nuisance", n=40, p=2, q=10, psi=0.5, seed=3)
    )
    data = scenario.data
    V = scenario.truth.nuisance_covariance
    result = irga_fit(data, GaussianPrior.isotropic(2, 4.0), NuisanceEstimator.gaussian(V))
    mean, cov = conjugate_posterior(data.X, data.y, 1.0, 4.0, noise_cov=V)
    np.testing.assert_allclose(result.posterior_mean(), mean, atol=1e-8)
    np.testing.assert_allclose(result.posterior.covariance(), cov, atol=1e-8)


def test_exact_estimator_tracks_joint_enumeration():
    prior = SpikeSlabPrior(lam=0.25, psi=1.0)
    zero_misses = 0
    for seed in range(20):
        spec = ScenarioSpec(
            family="covariate_adjust",
            n=50,
            p=2,
            q=8,
            lam=0.25,
            psi=1.0,
            nuisance_signal=[1.5, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            nuisance_correlation=0.6,
            seed=seed,
        )
        data = generate(spec).data
        joint = exact_selection_oracle(data.y, np.hstack([data.X, data.Z]), prior, 1.0)
        exact = irga_fit(data, prior, NuisanceEstimator.exact()).inclusion_probs()
        ignored = irga_fit(data, prior, NuisanceEstimator.zero()).inclusion_probs()
        np.testing.assert_allclose(exact, joint[:2], atol=0.05, err_msg=f"seed {seed}")
        zero_misses += int(np.max(np.abs(ignored - joint[:2])) > 0.05)
    assert zero_misses >= 10


def test_isotropic_nuisance_variance_dilutes_evidence(rng):
    RX = 3.0 * orthogonal_design(2, 2, rng)
    Ry = 0.8 * RX[:, 0]
    lam, psi, sigma2 = 0.3, 1.0, 1.0
    prior = SpikeSlabPrior(lam=lam, psi=psi)
    a = np.sum(RX**2, axis=0)
    kappa = (RX.T @ Ry) ** 2 / (psi * a**2)
    cs = np.array([0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 64.0, 1e6])
    shifts = []
    for c in cs:
        summary = NuisanceSummary(mu_hat=np.zeros(2), Sigma_hat=c * np.eye(2))
        post = beta_posterior(Ry, RX, summary, sigma2, prior)
        shift = post.inclusion_log_odds() - np.log(lam / (1.0 - lam))
        # orthogonal RX with C = (sigma2 + c) I factorizes into per-coordinate Bayes factors
        t = psi * a / (sigma2 + c)
        np.testing.assert_allclose(
            shift, 0.5 * (kappa * t**2 / (1.0 + t) - np.log1p(t)), atol=1e-10
        )
        shifts.append(shift)
    shifts = np.array(shifts)

    # no evidence for the second coordinate: the penalty shrinks steadily
    assert np.all(np.diff(np.abs(shifts[:, 1])) < 0)
    # evidence for the first falls with c, overshoots the prior, then returns to it
    assert np.all(np.diff(shifts[cs <= 16.0, 0]) < 0)
    assert shifts[0, 0] > 0 > shifts[:, 0].min()
    np.testing.assert_allclose(shifts[-1], 0.0, atol=1e-4)


def test_vamp_estimator_close_to_exact(covariate_scenario):
    prior = SpikeSlabPrior(lam=0.3, psi=1.0)
    data = covariate_scenario.data
    via_vamp = irga_fit(data, prior, NuisanceEstimator.vamp())
    via_exact = irga_fit(data, prior, NuisanceEstimator.exact())
    np.testing.assert_allclose(
        via_vamp.inclusion_probs(), via_exact.inclusion_probs(), atol=0.15
    )
    assert via_vamp.nuisance.alpha is not None


def test_unknown_sigma2_is_taken_from_estimator(small_dataset):
    data = Dataset(y=small_dataset.y, X=small_dataset.X)
    result = irga_fit(data, SpikeSlabPrior(0.5, 1.0), NuisanceEstimator.zero())
    assert result.sigma2_used == result.nuisance.sigma2


def test_rank_deficient_design(rng):
    x = rng.standard_normal(20)
    data = Dataset(y=rng.standard_normal(20), X=np.column_stack([x, 2 * x]), sigma2=1.0)
    with pytest.raises(RankDeficient):
        irga_fit(data, SpikeSlabPrior(0.5, 1.0), NuisanceEstimator.zero())


def test_result_dimension_check(small_dataset):
    result = irga_fit(small_dataset, SpikeSlabPrior(0.5, 1.0), NuisanceEstimator.zero())
    with pytest.raises(DimensionMismatch):
        IrgaResult(
            posterior=result.posterior,
            summary=NuisanceSummary.zero(2),
            sigma2_used=1.0,
        )


def _selection_problem(block_size, parallelism=1, sigma2=None, r=10, seed=0):
    spec = ScenarioSpec(
        family="selection", n=150, r=r, lam=0.3, psi=1.0, rho=0.3, seed=5
    )
    data = generate(spec).data
    return SelectionProblem(
        y=data.y,
        A=data.X,
        prior=SpikeSlabPrior(lam=0.3, psi=1.0),
        block_size=block_size,
        parallelism=parallelism,
        sigma2=sigma2,
        seed=seed,
    )


def test_blocks_cover_all_variables():
    problem = _selection_problem(block_size=4)
    assert problem.blocks() == [(0, 4), (4, 8), (8, 10)]


def test_worker_count_does_not_change_output():
    serial = select_blocks(_selection_problem(3, parallelism=1), NuisanceEstimator.vamp())
    parallel = select_blocks(_selection_problem(3, parallelism=3), NuisanceEstimator.vamp())
    np.testing.assert_allclose(parallel.inclusion_probs, serial.inclusion_probs, rtol=1e-12)
    np.testing.assert_allclose(parallel.posterior_mean, serial.posterior_mean, rtol=1e-12)
    np.testing.assert_allclose(parallel.sigma2, serial.sigma2, rtol=1e-12)


def test_shared_executor():
    problem = _selection_problem(5, sigma2=1.0)
    with Executor(num_threads=2) as pool:
        probs = select_all(problem, NuisanceEstimator.vamp(), executor=pool)
    assert probs.shape == (10,)
    assert np.all((probs >= 0) & (probs <= 1))


def test_single_block_is_the_exact_oracle():
    problem = _selection_problem(block_size=10, sigma2=1.0)
    result = select_blocks(problem, NuisanceEstimator.vamp())
    expected = exact_selection_oracle(problem.y, problem.A, problem.prior, 1.0)
    np.testing.assert_allclose(result.inclusion_probs, expected, atol=1e-10)
    interior = (expected > 1e-8) & (expected < 1 - 1e-8)
    np.testing.assert_allclose(
        result.log_odds[interior],
        np.log(expected[interior]) - np.log1p(-expected[interior]),
        rtol=1e-6,
    )


@pytest.mark.parametrize(
    "kwargs",
    [
        {"block_size": 0},
        {"block_size": 11},
        {"block_size": 2, "parallelism": 0},
    ],
)
def test_selection_problem_validation(kwargs):
    with pytest.raises(ConfigError):
        _selection_problem(**kwargs)


def test_selection_needs_two_variables(rng):
    with pytest.raises(ConfigError, match="r >= 2"):
        SelectionProblem(
            y=rng.standard_normal(10),
            A=rng.standard_normal((10, 1)),
            prior=SpikeSlabPrior(0.5, 1.0),
            block_size=1,
        )
    with pytest.raises(DimensionMismatch):
        SelectionProblem(
            y=rng.standard_normal(10),
            A=rng.standard_normal((9, 3)),
            prior=SpikeSlabPrior(0.5, 1.0),
            block_size=1,
        )


def test_orthogonal_blocks_decouple(rng):
    A = orthogonal_design(200, 8, rng)
    theta = np.array([0.3, 0.0, -0.2, 0.0, 0.1, 0.0, 0.0, 0.25])
    y = A @ theta + rng.standard_normal(200)
    prior = SpikeSlabPrior(lam=0.4, psi=1.0)
    problem = SelectionProblem(y=y, A=A, prior=prior, block_size=2, sigma2=1.0)
    result = select_blocks(problem, NuisanceEstimator.exact())
    expected = exact_selection_oracle(y, A, prior, 1.0)
    np.testing.assert_allclose(result.inclusion_probs, expected, atol=1e-6)
