"""Prior families and the scalar spike-and-slab posterior moments.

The spike-and-slab prior is a product measure, so its denoiser is a scalar map
applied coordinatewise. All mixture weights are handled on the log scale.
"""

from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from scipy.special import expit, logit

from irgaflux.exceptions import ConfigError, InvalidVariance


@dataclass(frozen=True)
class SpikeSlabPrior:
    """Independent `lam N(0, psi) + (1 - lam) delta(0)` coordinates.

    Args:
        lam:
            Prior inclusion probability, in (0, 1).
        psi:
            Slab variance, positive.
    """

    lam: float
    psi: float

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ConfigError(f"Inclusion probability must lie in (0, 1), got {self.lam}")
        if not self.psi > 0.0:
            raise ConfigError(f"Slab variance must be positive, got {self.psi}")

    @property
    def log_prior_odds(self) -> float:
        return float(logit(self.lam))

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        included = rng.random(size) < self.lam
        return np.where(included, rng.normal(0.0, np.sqrt(self.psi), size), 0.0)


@dataclass(frozen=True)
class GPrior:
    """Zellner prior `beta_gamma | gamma ~ N(0, sigma2 g_n (X_g^T X_g)^-1)`.

    `lam` is the independent Bernoulli inclusion probability of the model
    prior; 1/2 gives the uniform prior over models.
    """

    g_n: float
    lam: float = 0.5

    def __post_init__(self):
        if not self.g_n > 0.0:
            raise ConfigError(f"g_n must be positive, got {self.g_n}")
        if not 0.0 < self.lam < 1.0:
            raise ConfigError(f"Inclusion probability must lie in (0, 1), got {self.lam}")


@dataclass(frozen=True)
class GaussianPrior:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ConfigError(
                f"Covariance of shape {cov.shape} does not match mean of size {mean.size}"
            )
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-12:
            raise ConfigError("Gaussian prior covariance must be symmetric")
        if np.linalg.eigvalsh(cov).min() < -1e-10:
            raise ConfigError("Gaussian prior covariance must be positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @classmethod
    def isotropic(cls, p: int, variance: float, mean: float = 0.0) -> "GaussianPrior":
        return cls(mean=np.full(p, float(mean)), covariance=variance * np.eye(p))

    @property
    def dim(self) -> int:
        return self.mean.size


BetaPrior = Union[SpikeSlabPrior, GaussianPrior, GPrior]


class DenoiserOutput(NamedTuple):
    mean: np.ndarray
    variance: np.ndarray
    inclusion_prob: np.ndarray


def spike_slab_inclusion_log_odds(r, tau, prior: SpikeSlabPrior) -> np.ndarray:
    """Posterior log-odds of `alpha != 0` given `r ~ N(alpha, tau)`."""
    r = np.asarray(r, dtype=float)
    total = prior.psi + tau
    return (
        prior.log_prior_odds
        + 0.5 * (np.log(tau) - np.log(total))
        + 0.5 * r * r * (prior.psi / (tau * total))
    )


def spike_slab_denoise(r, tau, prior: SpikeSlabPrior) -> DenoiserOutput:
    """Exact posterior moments of a spike-and-slab scalar observed with Gaussian noise.

    Works elementwise on arrays of pseudo-observations with a shared or
    per-coordinate pseudo-noise variance.

    Args:
        r:
            Pseudo-observation(s).
        tau:
            Pseudo-noise variance(s), positive.
        prior:
            The spike-and-slab prior.

    Returns:
        Posterior mean, variance and inclusion probability.

    Raises:
        InvalidVariance: If any `tau <= 0`.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(~(tau > 0.0)):
        raise InvalidVariance(f"Pseudo-noise variance must be positive, got {tau}")
    r = np.asarray(r, dtype=float)
    shrink = prior.psi / (prior.psi + tau)
    slab_mean = shrink * r
    slab_var = shrink * tau
    prob = expit(spike_slab_inclusion_log_odds(r, tau, prior))
    mean = prob * slab_mean
    variance = prob * slab_var + prob * (1.0 - prob) * slab_mean**2
    return DenoiserOutput(mean, variance, prob)


def slab_moments(r, tau, prior: SpikeSlabPrior):
    """Mean and variance of the slab component of the scalar posterior."""
    tau = np.asarray(tau, dtype=float)
    shrink = prior.psi / (prior.psi + tau)
    return shrink * np.asarray(r, dtype=float), shrink * tau
