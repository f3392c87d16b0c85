"""Reference samplers used to validate the approximation.

`gibbs_spike_slab` is a systematic-scan spike-and-slab Gibbs sampler for
`y ~ N(A theta, sigma2 I)`; `mh_gp` a random-walk Metropolis-Hastings sampler
over the GP latent F with a Gaussian beta integrated out. Monte Carlo errors
use overlapping batch means.
"""

from dataclasses import dataclass
from typing import Literal, Optional

import msgspec
import numpy as np
import scipy.linalg
from scipy.special import expit

from irgaflux.exceptions import ConfigError, DimensionMismatch, TraceTooShort
from irgaflux.gp_nuisance import GpConfig, kernel_cholesky
from irgaflux.logger import log_progress, logger
from irgaflux.priors import GaussianPrior, SpikeSlabPrior

_PROGRESS_EVERY = 10_000


class McmcConfig(msgspec.Struct, kw_only=True):
    """Chain controls.

    `batch_length` defaults to `floor(sqrt(recorded))`. `proposal` applies to
    `mh_gp`: `prior_shaped` increments F by `rw_step * L eps` (covariance
    `rw_step^2 K`), `spherical` by `rw_step * eps`. With `tune_burnin` the
    step is rescaled during burn-in only, then frozen for the recorded draws.
    """

    burnin: int = 10_000
    recorded: int = 90_000
    seed: int = 0
    rw_step: float = 0.05
    batch_length: Optional[int] = None
    proposal: Literal["prior_shaped", "spherical"] = "prior_shaped"
    tune_burnin: bool = True
    target_acceptance: float = 0.25
    sigma2_prior_shape: float = 1.0
    sigma2_prior_rate: float = 1.0
    density_grid: int = 200
    density_draws: int = 2000

    def __post_init__(self):
        if self.burnin < 0:
            raise ConfigError(f"burnin must be nonnegative, got {self.burnin}")
        if self.recorded < 1:
            raise ConfigError(f"recorded must be positive, got {self.recorded}")
        if not self.rw_step > 0:
            raise ConfigError(f"rw_step must be positive, got {self.rw_step}")
        if self.batch_length is not None and self.batch_length < 1:
            raise ConfigError(f"batch_length must be positive, got {self.batch_length}")
        if not 0 < self.target_acceptance < 1:
            raise ConfigError("target_acceptance must lie in (0, 1)")

    def resolved_batch_length(self) -> int:
        if self.batch_length is not None:
            return self.batch_length
        return max(1, int(np.floor(np.sqrt(self.recorded))))


def batch_means_se(trace: np.ndarray, batch_length: int) -> float:
    """Overlapping-batch-means standard error of the mean of `trace`.

    Raises:
        TraceTooShort: fewer than `2 * batch_length` samples.
    """
    trace = np.asarray(trace, dtype=float).ravel()
    n = trace.size
    b = int(batch_length)
    if b < 1 or n < 2 * b:
        raise TraceTooShort(
            f"Trace of length {n} is too short for batches of {b}", length=n, batch=b
        )
    csum = np.concatenate(([0.0], np.cumsum(trace - trace.mean())))
    window_means = (csum[b:] - csum[:-b]) / b
    variance = n * b * np.sum(window_means**2) / ((n - b) * (n - b + 1))
    return float(np.sqrt(variance / n))


@dataclass(frozen=True)
class GibbsResult:
    inclusion_probs: np.ndarray
    inclusion_se: np.ndarray
    theta_mean: np.ndarray
    sigma2_trace: np.ndarray
    batch_length: int

    @property
    def average_se(self) -> float:
        return float(self.inclusion_se.mean())


def gibbs_spike_slab(
    y: np.ndarray,
    A: np.ndarray,
    prior: SpikeSlabPrior,
    config: Optional[McmcConfig] = None,
    sigma2: Optional[float] = None,
) -> GibbsResult:
    """Systematic-scan Gibbs sampler for the spike-and-slab linear model.

    Each coordinate first draws its indicator with theta_j integrated out, then
    theta_j from its Gaussian conditional. With `sigma2=None` the error
    variance is sampled under `1/sigma2 ~ Ga(shape, rate)` from the config.

    Returns:
        Indicator averages with per-variable batch-means standard errors, the
        posterior mean of theta and the recorded sigma2 trace.
    """
    config = config or McmcConfig()
    y = np.asarray(y, dtype=float).ravel()
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    n, r = A.shape
    if y.size != n:
        raise DimensionMismatch(f"A has {n} rows but y has {y.size} entries")
    if sigma2 is not None and not sigma2 > 0:
        raise ConfigError(f"sigma2 must be positive, got {sigma2}")
    rng = np.random.default_rng(config.seed)
    col_sq = np.einsum("ij,ij->j", A, A)
    prior_logit = prior.log_prior_odds
    theta = np.zeros(r)
    resid = y.copy()
    s2 = float(sigma2) if sigma2 is not None else float(max(y @ y / n, 1e-8))
    total = config.burnin + config.recorded
    indicators = np.zeros((config.recorded, r), dtype=np.int8)
    theta_sum = np.zeros(r)
    s2_trace = np.empty(config.recorded)

    for it in range(total):
        uniforms = rng.random(r)
        normals = rng.standard_normal(r)
        for j in range(r):
            a_j = A[:, j]
            partial = resid + a_j * theta[j]
            precision = col_sq[j] / s2 + 1.0 / prior.psi
            cond_mean = (a_j @ partial) / s2 / precision
            log_odds = (
                prior_logit
                - 0.5 * np.log(prior.psi * precision)
                + 0.5 * cond_mean * cond_mean * precision
            )
            if uniforms[j] < expit(log_odds):
                theta[j] = cond_mean + normals[j] / np.sqrt(precision)
            else:
                theta[j] = 0.0
            resid = partial - a_j * theta[j]
        if sigma2 is None:
            shape = config.sigma2_prior_shape + 0.5 * n
            rate = config.sigma2_prior_rate + 0.5 * (resid @ resid)
            s2 = 1.0 / rng.gamma(shape, 1.0 / rate)
        k = it - config.burnin
        if k >= 0:
            indicators[k] = theta != 0.0
            theta_sum += theta
            s2_trace[k] = s2
        if (it + 1) % _PROGRESS_EVERY == 0:
            log_progress("Gibbs iteration %d of %d", it + 1, total)

    b = config.resolved_batch_length()
    probs = indicators.mean(axis=0)
    se = np.array([batch_means_se(indicators[:, j], b) for j in range(r)])
    logger.info("Gibbs sampler finished: average batch-means SE %.2e", se.mean())
    return GibbsResult(
        inclusion_probs=probs,
        inclusion_se=se,
        theta_mean=theta_sum / config.recorded,
        sigma2_trace=s2_trace,
        batch_length=b,
    )


@dataclass(frozen=True)
class MhResult:
    """Rao-Blackwellized beta posterior from the MH chain over F.

    `density[j]` is the estimated posterior density of beta_j on `grid[j]`.
    """

    beta_mean: np.ndarray
    beta_sd: np.ndarray
    beta_mean_se: np.ndarray
    acceptance_rate: float
    rw_step: float
    grid: np.ndarray
    density: np.ndarray
    F_mean: np.ndarray
    log_target_trace: np.ndarray


class _MarginalTarget:
    """Log density of F with beta integrated out:
    `y - G(F) ~ N(X m0, sigma2 I + X V0 X^T)` times the GP prior of F.
    """

    def __init__(self, y, X, prior: GaussianPrior, sigma2, L, link):
        self.y = y
        self.X = X
        self.L = L
        self.link = link
        self.m0 = prior.mean
        marginal = sigma2 * np.eye(y.size) + X @ prior.covariance @ X.T
        self.chol = scipy.linalg.cho_factor(marginal, lower=True)
        self.gain = scipy.linalg.cho_solve(self.chol, X @ prior.covariance).T
        self.post_cov = prior.covariance - self.gain @ X @ prior.covariance
        self.offset = y - X @ self.m0

    def centered(self, F):
        return self.offset - self.link.g(F)

    def log_likelihood(self, F) -> float:
        resid = self.centered(F)
        return float(-0.5 * resid @ scipy.linalg.cho_solve(self.chol, resid))

    def beta_mean(self, F) -> np.ndarray:
        return self.m0 + self.gain @ self.centered(F)


def mh_gp(
    y: np.ndarray,
    X: np.ndarray,
    features: np.ndarray,
    gp_config: GpConfig,
    mcmc_config: McmcConfig,
    beta_prior: GaussianPrior,
    sigma2: float,
) -> MhResult:
    """Random-walk Metropolis-Hastings over F for `y = X beta + G(F) + eps`.

    beta is integrated out analytically, so the chain moves on F alone; the
    beta posterior is the average of the Gaussian `beta | F, y` over recorded
    draws.
    """
    if not sigma2 > 0:
        raise ConfigError(f"sigma2 must be positive, got {sigma2}")
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != y.size:
        raise DimensionMismatch(f"X has {X.shape[0]} rows but y has {y.size} entries")
    if beta_prior.dim != X.shape[1]:
        raise DimensionMismatch(f"Prior of dimension {beta_prior.dim} for p={X.shape[1]}")
    config = mcmc_config
    rng = np.random.default_rng(config.seed)
    L = kernel_cholesky(features, gp_config)
    target = _MarginalTarget(y, X, beta_prior, sigma2, L, gp_config.link_fns)
    n = y.size
    spherical = config.proposal == "spherical"

    u = np.zeros(n)
    F = np.zeros(n)
    log_target = target.log_likelihood(F)
    step = config.rw_step
    accepted = 0
    window_accepted = 0
    total = config.burnin + config.recorded
    beta_means = np.empty((config.recorded, X.shape[1]))
    log_trace = np.empty(config.recorded)
    F_sum = np.zeros(n)

    for it in range(total):
        eps = rng.standard_normal(n)
        if spherical:
            F_new = F + step * eps
            u_new = scipy.linalg.solve_triangular(L, F_new, lower=True)
        else:
            u_new = u + step * eps
            F_new = L @ u_new
        log_new = target.log_likelihood(F_new)
        log_ratio = (log_new - 0.5 * u_new @ u_new) - (log_target - 0.5 * u @ u)
        if np.log(rng.random()) < log_ratio:
            u, F, log_target = u_new, F_new, log_new
            window_accepted += 1
            if it >= config.burnin:
                accepted += 1
        if it < config.burnin and config.tune_burnin and (it + 1) % 100 == 0:
            rate = window_accepted / 100
            step *= np.exp(rate - config.target_acceptance)
            window_accepted = 0
        if it == config.burnin - 1:
            window_accepted = 0
        k = it - config.burnin
        if k >= 0:
            beta_means[k] = target.beta_mean(F)
            log_trace[k] = log_target - 0.5 * u @ u
            F_sum += F
        if (it + 1) % _PROGRESS_EVERY == 0:
            log_progress("MH iteration %d of %d, step %.4g", it + 1, total, step)

    acceptance = accepted / config.recorded
    mean = beta_means.mean(axis=0)
    spread = beta_means.var(axis=0)
    cond_var = np.clip(np.diag(target.post_cov), 1e-300, None)
    sd = np.sqrt(cond_var + spread)
    b = min(config.resolved_batch_length(), config.recorded // 2)
    if b >= 1:
        mean_se = np.array(
            [batch_means_se(beta_means[:, j], b) for j in range(X.shape[1])]
        )
    else:
        mean_se = np.full(X.shape[1], np.nan)

    thin = max(1, config.recorded // config.density_draws)
    centers = beta_means[::thin]
    cond_sd = np.sqrt(cond_var)
    grid = np.linspace(mean - 5 * sd, mean + 5 * sd, config.density_grid).T
    z = (grid[:, :, None] - centers.T[:, None, :]) / cond_sd[:, None, None]
    density = np.exp(-0.5 * z * z).mean(axis=2) / (np.sqrt(2 * np.pi) * cond_sd[:, None])

    logger.info("MH over F finished: acceptance %.3f with step %.4g", acceptance, step)
    return MhResult(
        beta_mean=mean,
        beta_sd=sd,
        beta_mean_se=mean_se,
        acceptance_rate=acceptance,
        rw_step=step,
        grid=grid,
        density=density,
        F_mean=F_sum / config.recorded,
        log_target_trace=log_trace,
    )


__all__ = [
    "GibbsResult",
    "McmcConfig",
    "MhResult",
    "batch_means_se",
    "gibbs_spike_slab",
    "mh_gp",
]
