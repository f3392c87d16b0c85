import numpy as np
import pytest

from helpers import orthogonal_design
from irgaflux import vamp as vamp_module
from irgaflux.exact_posterior import selection_posterior
from irgaflux.exceptions import ConfigError, DimensionMismatch, NumericalDivergence
from irgaflux.priors import SpikeSlabPrior
from irgaflux.vamp import VampConfig, vamp_fit, with_sigma2


@pytest.mark.parametrize("sigma2", [0.5, 1.0, 2.0])
def test_exact_on_orthogonal_equal_norm_design(rng, sigma2):
    m, q = 120, 5
    A = orthogonal_design(m, q, rng)
    alpha = np.array([0.4, 0.0, -0.25, 0.0, 0.1])
    y = A @ alpha + rng.normal(0.0, np.sqrt(sigma2), m)
    prior = SpikeSlabPrior(lam=0.3, psi=1.0)

    summary = vamp_fit(y, A, prior, sigma2, VampConfig(estimate_sigma2=False))
    exact = selection_posterior(y, A, prior, sigma2)

    assert summary.converged
    np.testing.assert_allclose(summary.inclusion_probs, exact.inclusion_probs(), atol=1e-6)
    np.testing.assert_allclose(summary.mean, exact.mean(), atol=1e-6)
    np.testing.assert_allclose(summary.variances, np.diag(exact.covariance()), atol=1e-6)
    np.testing.assert_allclose(summary.extrinsic_mean, A.T @ y / m, atol=1e-8)
    assert summary.extrinsic_precision == pytest.approx(m / sigma2)


def test_recovers_sparse_signal_on_random_design(rng):
    m, q = 300, 40
    A = rng.standard_normal((m, q))
    alpha = np.zeros(q)
    alpha[:3] = [2.0, -2.0, 1.5]
    y = A @ alpha + rng.standard_normal(m)
    summary = vamp_fit(y, A, SpikeSlabPrior(lam=0.1, psi=4.0), 1.0)
    assert np.all(summary.inclusion_probs[:3] > 0.99)
    assert np.median(summary.inclusion_probs[3:]) < 0.2
    assert summary.sigma2_hat == pytest.approx(1.0, abs=0.3)
    np.testing.assert_allclose(summary.mean[:3], alpha[:3], atol=0.3)


def test_known_sigma2_is_not_updated(rng):
    A = rng.standard_normal((50, 10))
    y = rng.standard_normal(50)
    summary = vamp_fit(y, A, SpikeSlabPrior(0.2, 1.0), 0.7, VampConfig(estimate_sigma2=False))
    assert summary.sigma2_hat == 0.7


def test_with_sigma2_copies_config():
    config = VampConfig(max_iters=20)
    fixed = with_sigma2(config, False)
    assert not fixed.estimate_sigma2
    assert config.estimate_sigma2
    assert fixed.max_iters == 20


@pytest.mark.parametrize(
    "kwargs",
    [
        {"max_iters": 0},
        {"tol": 0.0},
        {"damping": 0.0},
        {"damping": 1.5},
        {"sigma2_prior_shape": -1.0},
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        VampConfig(**kwargs)


def test_shape_and_variance_errors(rng):
    prior = SpikeSlabPrior(0.5, 1.0)
    with pytest.raises(DimensionMismatch):
        vamp_fit(np.zeros(10), rng.standard_normal((9, 3)), prior, 1.0)
    with pytest.raises(ConfigError):
        vamp_fit(np.zeros(10), rng.standard_normal((10, 3)), prior, 0.0)


def test_persistent_nonpositive_precision_raises(rng, mocker):
    def always_fail(self, state, damping, allow_clip=False):
        raise vamp_module._NonPositivePrecision("forced")

    mocker.patch.object(vamp_module.VampSolver, "step", always_fail)
    A = rng.standard_normal((20, 4))
    with pytest.raises(NumericalDivergence, match="lower the damping"):
        vamp_fit(rng.standard_normal(20), A, SpikeSlabPrior(0.5, 1.0), 1.0)


def test_small_well_conditioned_problem_matches_enumeration(rng):
    m = 20
    A = orthogonal_design(m, 2, rng) + 0.02 * rng.standard_normal((m, 2))
    y = A @ np.array([3.0, 0.0]) + 0.5 * rng.standard_normal(m)
    prior = SpikeSlabPrior(lam=0.5, psi=4.0)
    summary = vamp_fit(y, A, prior, 0.25, VampConfig(estimate_sigma2=False))
    exact = selection_posterior(y, A, prior, 0.25)
    np.testing.assert_allclose(summary.inclusion_probs, exact.inclusion_probs(), atol=0.02)
    np.testing.assert_allclose(summary.mean, exact.mean(), atol=0.02)


def test_zero_observations_give_zero_mean_and_prior_inclusion(rng):
    A = rng.standard_normal((30, 5))
    prior = SpikeSlabPrior(lam=0.3, psi=1.0)
    summary = vamp_fit(np.zeros(30), A, prior, 1.0, VampConfig(estimate_sigma2=False))
    np.testing.assert_allclose(summary.mean, 0.0, atol=1e-8)
    assert np.all(summary.inclusion_probs <= prior.lam)


def _conditioned_design(m, q, rng, max_cond=5.0):
    U, _ = np.linalg.qr(rng.standard_normal((m, q)))
    V, _ = np.linalg.qr(rng.standard_normal((q, q)))
    s = rng.uniform(1.0, max_cond, q)
    s[0], s[-1] = 1.0, max_cond
    return np.sqrt(m) * (U * s) @ V.T / max_cond


def test_agrees_with_enumeration_on_random_small_problems():
    # scalar precisions leave a residual gap at small q, so the bound holds
    # for most instances rather than all of them
    prior = SpikeSlabPrior(lam=0.3, psi=1.0)
    config = VampConfig(max_iters=2000, estimate_sigma2=False)
    prob_gaps, mean_gaps, converged = [], [], []
    for seed in range(50):
        rng = np.random.default_rng(seed)
        q = int(rng.integers(2, 11))
        m = 4 * q + int(rng.integers(0, 20))
        A = _conditioned_design(m, q, rng)
        assert np.linalg.cond(A) < 10
        y = A @ prior.sample(q, rng) + rng.standard_normal(m)
        summary = vamp_fit(y, A, prior, 1.0, config)
        exact = selection_posterior(y, A, prior, 1.0)
        prob_gaps.append(np.max(np.abs(summary.inclusion_probs - exact.inclusion_probs())))
        mean_gaps.append(np.max(np.abs(summary.mean - exact.mean())))
        converged.append(summary.converged)
    prob_gaps, mean_gaps = np.array(prob_gaps), np.array(mean_gaps)

    assert np.mean(prob_gaps <= 0.05) >= 0.6
    assert np.mean(prob_gaps <= 0.15) >= 0.9
    assert np.max(prob_gaps) < 0.25
    assert np.mean(mean_gaps <= 0.05) >= 0.5
    assert np.mean(mean_gaps <= 0.15) >= 0.8
    assert np.mean(converged) >= 0.9


@pytest.mark.parametrize("seed", range(20))
def test_noise_variance_estimate_is_sane(seed):
    rng = np.random.default_rng(seed)
    m, q = 400, 40
    prior = SpikeSlabPrior(lam=0.1, psi=1.0)
    A = rng.standard_normal((m, q))
    alpha = np.zeros(q)
    alpha[rng.choice(q, 4, replace=False)] = rng.normal(0.0, 1.0, 4)
    y = A @ alpha + rng.standard_normal(m)
    summary = vamp_fit(y, A, prior, 3.0, VampConfig(estimate_sigma2=True))
    assert 0.7 <= summary.sigma2_hat <= 1.4
