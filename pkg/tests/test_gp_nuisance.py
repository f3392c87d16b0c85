import numpy as np
import pytest

from irgaflux import gp_nuisance as gp_module
from irgaflux.exceptions import ConfigError, DimensionMismatch, SingularKernel
from irgaflux.gp_nuisance import (
    GpConfig,
    gp_laplace_fit,
    gp_nuisance_summary,
    kernel_cholesky,
    kernel_matrix,
)
from irgaflux.rotation import compute_rotation


def test_kernel_values():
    K = kernel_matrix(np.array([0.0, 1.0, 3.0]), lengthscale_sq=2.0)
    np.testing.assert_allclose(np.diag(K), 1.0)
    np.testing.assert_allclose(K, K.T)
    assert K[0, 1] == pytest.approx(np.exp(-0.5))
    assert K[0, 2] == pytest.approx(np.exp(-4.5))


def test_kernel_on_multivariate_features(rng):
    features = rng.standard_normal((6, 2))
    K = kernel_matrix(features, 3.0)
    expected = np.exp(-np.sum((features[1] - features[4]) ** 2) / 3.0)
    assert K[1, 4] == pytest.approx(expected)


def test_singular_kernel():
    with pytest.raises(SingularKernel) as info:
        kernel_cholesky(np.zeros(3), GpConfig(jitter=1e-300))
    assert info.value.exit_code == 4


def _identity_problem(rng, n=25, p=2, sigma2=0.5):
    X = rng.standard_normal((n, p))
    z = np.sort(rng.uniform(-2, 2, n))
    config = GpConfig(lengthscale_sq=1.5, link="identity", n_samples=20_000, seed=3)
    K = kernel_matrix(z, config.lengthscale_sq) + config.jitter * np.eye(n)
    F = np.linalg.cholesky(K) @ rng.standard_normal(n)
    y = X @ np.array([1.0, -1.0]) + F + rng.normal(0, np.sqrt(sigma2), n)
    split = compute_rotation(X)
    return split, split.S.T @ y, z[:, None], config, K


def test_identity_link_mode_is_the_gaussian_conditional(rng):
    split, Sy, features, config, K = _identity_problem(rng)
    fit = gp_laplace_fit(Sy, split.S, features, config, 0.5)
    S = split.S
    marginal = S.T @ K @ S + 0.5 * np.eye(S.shape[1])
    expected_mode = K @ S @ np.linalg.solve(marginal, Sy)
    expected_cov = K - K @ S @ np.linalg.solve(marginal, S.T @ K)
    assert fit.converged
    np.testing.assert_allclose(fit.F_mode, expected_mode, atol=1e-6)
    np.testing.assert_allclose(fit.covariance_F(), expected_cov, atol=1e-6)


def test_summary_matches_laplace_moments(rng):
    split, Sy, features, config, _ = _identity_problem(rng)
    fit = gp_laplace_fit(Sy, split.S, features, config, 0.5)
    summary = gp_nuisance_summary(fit, split.R, config)
    exact_mean = split.R.T @ fit.F_mode
    exact_cov = split.R.T @ fit.covariance_F() @ split.R
    se = np.sqrt(np.diag(exact_cov) / config.n_samples)
    assert np.all(np.abs(summary.mu_hat - exact_mean) < 5 * se)
    scale = np.max(np.diag(exact_cov))
    np.testing.assert_allclose(summary.Sigma_hat, exact_cov, atol=0.05 * scale)


def test_square_link_improves_on_the_prior_mean(rng):
    n = 40
    X = rng.standard_normal((n, 1))
    z = rng.uniform(-3, 3, n)
    config = GpConfig(lengthscale_sq=10.0)
    K = kernel_matrix(z, 10.0) + 1e-8 * np.eye(n)
    F = np.linalg.cholesky(K) @ rng.standard_normal(n)
    y = 2.0 * X[:, 0] + F**2 + 0.3 * rng.standard_normal(n)
    split = compute_rotation(X)
    Sy = split.S.T @ y
    fit = gp_laplace_fit(Sy, split.S, z[:, None], config, 0.09)
    null_objective = -0.5 * Sy @ Sy / 0.09
    assert fit.log_posterior > null_objective
    assert fit.iterations >= 1
    draws = fit.sample_F(10, np.random.default_rng(0))
    assert draws.shape == (10, n)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"lengthscale_sq": 0.0},
        {"jitter": 0.0},
        {"n_samples": 50},
        {"gn_max_iters": 0},
        {"link": "cube"},
        {"init_scale": -1.0},
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        GpConfig(**kwargs)


def test_fit_input_checks(rng):
    split = compute_rotation(rng.standard_normal((10, 2)))
    Sy = rng.standard_normal(8)
    with pytest.raises(ConfigError):
        gp_laplace_fit(Sy, split.S, rng.standard_normal((10, 1)), GpConfig(), 0.0)
    with pytest.raises(DimensionMismatch):
        gp_laplace_fit(Sy, split.S, rng.standard_normal((9, 1)), GpConfig(), 1.0)
    with pytest.raises(DimensionMismatch):
        gp_laplace_fit(Sy[:5], split.S, rng.standard_normal((10, 1)), GpConfig(), 1.0)


def test_zero_observations_keep_the_square_link_at_zero(rng):
    n = 20
    split = compute_rotation(rng.standard_normal((n, 1)))
    fit = gp_laplace_fit(
        np.zeros(n - 1), split.S, rng.uniform(-2, 2, (n, 1)), GpConfig(), 1.0
    )
    assert np.linalg.norm(fit.F_mode) < 1e-6


def test_mode_beats_nearby_perturbations(rng):
    n = 30
    z = rng.uniform(-3, 3, n)
    config = GpConfig(lengthscale_sq=10.0, seed=4)
    K = kernel_matrix(z, 10.0) + config.jitter * np.eye(n)
    F = np.linalg.cholesky(K) @ rng.standard_normal(n)
    X = rng.standard_normal((n, 2))
    y = X @ np.array([1.0, 0.5]) + F**2 + 0.5 * rng.standard_normal(n)
    split = compute_rotation(X)
    Sy = split.S.T @ y
    fit = gp_laplace_fit(Sy, split.S, z[:, None], config, 0.25)
    link = config.link_fns
    best = gp_module._log_posterior(fit.u_mode, Sy, split.S, fit.kernel_factor, link, 0.25)
    assert best == pytest.approx(fit.log_posterior)
    for _ in range(100):
        nearby = fit.u_mode + 0.1 * rng.standard_normal(n)
        value = gp_module._log_posterior(nearby, Sy, split.S, fit.kernel_factor, link, 0.25)
        assert value <= best


def _square_problem(rng, n=30, sigma2=0.25):
    z = rng.uniform(-3, 3, n)
    K = kernel_matrix(z, 10.0) + 1e-8 * np.eye(n)
    F = np.linalg.cholesky(K) @ rng.standard_normal(n)
    X = rng.standard_normal((n, 1))
    y = X[:, 0] + F**2 + np.sqrt(sigma2) * rng.standard_normal(n)
    split = compute_rotation(X)
    return split, split.S.T @ y, z[:, None]


def test_stalled_line_search_is_not_converged(mocker, rng):
    split, Sy, features = _square_problem(rng)
    config = GpConfig(seed=2)
    start = config.init_scale * np.random.default_rng(config.seed).standard_normal(Sy.size + 1)

    def only_the_start(u, *args):
        return 0.0 if np.array_equal(u, start) else -1.0

    mocker.patch.object(gp_module, "_log_posterior", side_effect=only_the_start)
    fit = gp_laplace_fit(Sy, split.S, features, config, 0.25)
    assert not fit.converged
    assert fit.iterations == 1
    np.testing.assert_array_equal(fit.u_mode, start)


def test_single_halving_flags_only_stationary_points(rng):
    split, Sy, features = _square_problem(rng)
    config = GpConfig(max_halvings=1, seed=5)
    fit = gp_laplace_fit(Sy, split.S, features, config, 0.25)
    link = config.link_fns
    u, L = fit.u_mode, fit.kernel_factor
    J = gp_module._jacobian(u, split.S, L, link)
    resid = Sy - split.S.T @ link.g(L @ u)
    gradient = J.T @ resid / 0.25 - u
    assert fit.iterations >= 1
    if fit.converged:
        assert np.linalg.norm(gradient) <= 1e-2 * max(np.linalg.norm(u), 1.0)
