"""Exact Bayesian computation for small Gaussian linear models.

Subsets are enumerated in bitmask order: model i contains variable j iff bit j
of i is set. For a model `d ~ N(W beta, C)` all quantities reduce to
`G = W^T C^-1 W`, `b = W^T C^-1 d` and `log N(d | 0, C)`, so one enumeration
routine serves Step 3 of the approximation, the brute-force selection oracle
and the exact nuisance mixture.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from irgaflux.envs import envs
from irgaflux.exceptions import (
    ConfigError,
    DimensionMismatch,
    SingularCovariance,
    TooManyVariables,
)
from irgaflux.logger import logger
from irgaflux.priors import GaussianPrior, GPrior, SpikeSlabPrior
from irgaflux.rotation import check_full_rank

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class NuisanceSummary:
    """Gaussian moments `(mu_hat, Sigma_hat)` of the projected nuisance R^T eta."""

    mu_hat: np.ndarray
    Sigma_hat: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu_hat, dtype=float))
        cov = np.atleast_2d(np.asarray(self.Sigma_hat, dtype=float))
        if cov.shape != (mu.size, mu.size):
            raise DimensionMismatch(
                f"Sigma_hat of shape {cov.shape} does not match mu_hat of size {mu.size}"
            )
        scale = max(1.0, float(np.max(np.abs(cov), initial=0.0)))
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-10 * scale:
            raise ConfigError("Sigma_hat must be symmetric")
        if mu.size and np.linalg.eigvalsh(0.5 * (cov + cov.T)).min() < -1e-8 * scale:
            raise ConfigError("Sigma_hat must be positive semidefinite")
        object.__setattr__(self, "mu_hat", mu)
        object.__setattr__(self, "Sigma_hat", cov)

    @classmethod
    def zero(cls, p: int) -> "NuisanceSummary":
        return cls(mu_hat=np.zeros(p), Sigma_hat=np.zeros((p, p)))

    @property
    def p(self) -> int:
        return self.mu_hat.size

    def cleaned_covariance(self) -> np.ndarray:
        """Symmetrized covariance with negative eigenvalues floored at zero."""
        sym = 0.5 * (self.Sigma_hat + self.Sigma_hat.T)
        vals, vecs = np.linalg.eigh(sym)
        if vals.min(initial=0.0) >= 0.0:
            return sym
        return (vecs * np.clip(vals, 0.0, None)) @ vecs.T


@dataclass(frozen=True)
class SubsetModel:
    gamma: Tuple[int, ...]
    log_weight: float
    cond_mean: np.ndarray
    cond_cov: np.ndarray


def _mask_index(gamma) -> int:
    return int(sum(1 << j for j in gamma))


@dataclass(frozen=True)
class BetaPosterior:
    """Mixture over all 2^p supports of Gaussian conditionals for beta_gamma.

    `log_evidence` is the log normalizer of the enumerated weights, i.e. the
    log marginal likelihood of the data the posterior was computed from.
    """

    models: List[SubsetModel]
    p: int
    log_evidence: float = 0.0
    _weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.models) != 2**self.p:
            raise ConfigError(
                f"A posterior over p={self.p} needs {2**self.p} models, "
                f"got {len(self.models)}"
            )
        log_w = np.array([m.log_weight for m in self.models])
        object.__setattr__(self, "_weights", np.exp(log_w))

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    def inclusion_probs(self) -> np.ndarray:
        probs = np.zeros(self.p)
        for model, weight in zip(self.models, self._weights):
            for j in model.gamma:
                probs[j] += weight
        return np.clip(probs, 0.0, 1.0)

    def inclusion_log_odds(self) -> np.ndarray:
        """Log-odds of inclusion computed from log weights, finite for extreme cases."""
        log_in = np.full(self.p, -np.inf)
        log_out = np.full(self.p, -np.inf)
        for model in self.models:
            members = set(model.gamma)
            for j in range(self.p):
                if j in members:
                    log_in[j] = np.logaddexp(log_in[j], model.log_weight)
                else:
                    log_out[j] = np.logaddexp(log_out[j], model.log_weight)
        return log_in - log_out

    def mean(self) -> np.ndarray:
        out = np.zeros(self.p)
        for model, weight in zip(self.models, self._weights):
            if model.gamma:
                out[list(model.gamma)] += weight * model.cond_mean
        return out

    def second_moment(self) -> np.ndarray:
        out = np.zeros((self.p, self.p))
        for model, weight in zip(self.models, self._weights):
            if model.gamma:
                idx = np.array(model.gamma)
                block = model.cond_cov + np.outer(model.cond_mean, model.cond_mean)
                out[np.ix_(idx, idx)] += weight * block
        return out

    def covariance(self) -> np.ndarray:
        mu = self.mean()
        return self.second_moment() - np.outer(mu, mu)

    def marginal_sd(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance()), 0.0, None))

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Draws of beta; coordinates outside the sampled support are exactly 0."""
        counts = rng.multinomial(size, self._weights / self._weights.sum())
        draws = np.zeros((size, self.p))
        start = 0
        for model, count in zip(self.models, counts):
            if count == 0:
                continue
            if model.gamma:
                block = rng.multivariate_normal(
                    model.cond_mean, model.cond_cov, size=count, method="cholesky"
                )
                draws[start : start + count][:, list(model.gamma)] = block
            start += count
        return draws[rng.permutation(size)]

    def log_density(self, draws: np.ndarray) -> np.ndarray:
        """Log density with respect to the sum over supports of Lebesgue measure
        on each support's coordinates (counting measure on the empty one).
        """
        draws = np.atleast_2d(draws)
        masks = draws != 0.0
        index = masks.astype(np.int64) @ (1 << np.arange(self.p, dtype=np.int64))
        out = np.full(draws.shape[0], -np.inf)
        for i in np.unique(index):
            model = self.models[int(i)]
            rows = index == i
            if model.gamma:
                values = draws[rows][:, list(model.gamma)]
                log_dens = _mvn_logpdf(values, model.cond_mean, model.cond_cov)
            else:
                log_dens = np.zeros(int(rows.sum()))
            out[rows] = model.log_weight + log_dens
        return out


@dataclass(frozen=True)
class GaussianBetaPosterior:
    """Conjugate Gaussian posterior of beta under a Gaussian prior."""

    mean_: np.ndarray
    cov: np.ndarray
    log_evidence: float = 0.0

    @property
    def p(self) -> int:
        return self.mean_.size

    def mean(self) -> np.ndarray:
        return self.mean_

    def covariance(self) -> np.ndarray:
        return self.cov

    def marginal_sd(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    def inclusion_probs(self) -> np.ndarray:
        return np.ones(self.p)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return rng.multivariate_normal(self.mean_, self.cov, size=size, method="eigh")

    def log_density(self, draws: np.ndarray) -> np.ndarray:
        return _mvn_logpdf(np.atleast_2d(draws), self.mean_, self.cov)


AnyBetaPosterior = Union[BetaPosterior, GaussianBetaPosterior]


def _mvn_logpdf(values: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    chol = scipy.linalg.cholesky(cov, lower=True)
    centered = (values - mean).T
    z = scipy.linalg.solve_triangular(chol, centered, lower=True)
    k = mean.size
    return -0.5 * (np.sum(z * z, axis=0) + k * _LOG_2PI) - np.sum(
        np.log(np.diag(chol))
    )


def _cholesky_or_raise(C: np.ndarray, what: str):
    try:
        return scipy.linalg.cho_factor(C, lower=True)
    except np.linalg.LinAlgError as e:
        raise SingularCovariance(f"{what} is not positive definite") from e


def _enumeration_guard(p: int, limit: int, what: str = "variables") -> None:
    if p > limit:
        raise TooManyVariables(p, limit, what)


# Prior terms of a support: (prior precision of beta_gamma, log det of prior covariance)
PriorTerms = Callable[[np.ndarray], Tuple[np.ndarray, float]]


def enumerate_supports(
    G: np.ndarray,
    b: np.ndarray,
    base_loglik: float,
    log_model_prior: Callable[[int], float],
    prior_terms: PriorTerms,
) -> BetaPosterior:
    """Enumerate all supports of `d ~ N(W beta, C)` given its sufficient statistics.

    Args:
        G:
            `W^T C^-1 W`, p x p.
        b:
            `W^T C^-1 d`, length p.
        base_loglik:
            `log N(d | 0, C)`, the null-model log likelihood.
        log_model_prior:
            Log prior probability of a support as a function of its size.
        prior_terms:
            Prior precision and log det prior covariance of `beta_gamma`.
    """
    p = b.size
    models: List[SubsetModel] = []
    log_unnorm = np.empty(2**p)
    for i in range(2**p):
        gamma = tuple(j for j in range(p) if (i >> j) & 1)
        k = len(gamma)
        if k == 0:
            models.append(SubsetModel(gamma, 0.0, np.zeros(0), np.zeros((0, 0))))
            log_unnorm[i] = log_model_prior(0) + base_loglik
            continue
        idx = np.array(gamma)
        prior_prec, logdet_prior_cov = prior_terms(idx)
        precision = prior_prec + G[np.ix_(idx, idx)]
        chol = _cholesky_or_raise(precision, f"Posterior precision of support {gamma}")
        b_g = b[idx]
        cond_mean = scipy.linalg.cho_solve(chol, b_g)
        cond_cov = scipy.linalg.cho_solve(chol, np.eye(k))
        cond_cov = 0.5 * (cond_cov + cond_cov.T)
        logdet_precision = 2.0 * np.sum(np.log(np.diag(chol[0])))
        log_unnorm[i] = (
            log_model_prior(k)
            + base_loglik
            - 0.5 * (logdet_prior_cov + logdet_precision)
            + 0.5 * b_g @ cond_mean
        )
        models.append(SubsetModel(gamma, 0.0, cond_mean, cond_cov))
    log_evidence = float(logsumexp(log_unnorm))
    log_weights = log_unnorm - log_evidence
    models = [
        SubsetModel(m.gamma, float(w), m.cond_mean, m.cond_cov)
        for m, w in zip(models, log_weights)
    ]
    return BetaPosterior(models=models, p=p, log_evidence=log_evidence)


def _bernoulli_model_prior(lam: float, p: int) -> Callable[[int], float]:
    log_in, log_out = np.log(lam), np.log1p(-lam)
    return lambda k: k * log_in + (p - k) * log_out


def _spike_slab_terms(psi: float) -> PriorTerms:
    def terms(idx: np.ndarray):
        k = idx.size
        return np.eye(k) / psi, k * np.log(psi)

    return terms


def _gaussian_statistics(d: np.ndarray, W: np.ndarray, C: np.ndarray, what: str):
    chol = _cholesky_or_raise(C, what)
    Cinv_d = scipy.linalg.cho_solve(chol, d)
    Cinv_W = scipy.linalg.cho_solve(chol, W)
    logdet_C = 2.0 * np.sum(np.log(np.diag(chol[0])))
    base = -0.5 * (d @ Cinv_d + logdet_C + d.size * _LOG_2PI)
    G = W.T @ Cinv_W
    return 0.5 * (G + G.T), W.T @ Cinv_d, float(base)


def _isotropic_statistics(d: np.ndarray, W: np.ndarray, sigma2: float):
    n = d.size
    base = -0.5 * (d @ d / sigma2 + n * np.log(sigma2) + n * _LOG_2PI)
    G = W.T @ W / sigma2
    return 0.5 * (G + G.T), W.T @ d / sigma2, float(base)


def _step3_inputs(Ry, RX, summary: NuisanceSummary, sigma2: float):
    if not sigma2 > 0:
        raise ConfigError(f"sigma2 must be positive, got {sigma2}")
    Ry = np.atleast_1d(np.asarray(Ry, dtype=float))
    RX = np.atleast_2d(np.asarray(RX, dtype=float))
    p = Ry.size
    if RX.shape != (p, p) or summary.p != p:
        raise DimensionMismatch(
            f"Ry ({p}), RX {RX.shape} and the nuisance summary ({summary.p}) disagree"
        )
    C = sigma2 * np.eye(p) + summary.cleaned_covariance()
    return Ry - summary.mu_hat, RX, C


def beta_posterior(
    Ry: np.ndarray,
    RX: np.ndarray,
    summary: NuisanceSummary,
    sigma2: float,
    prior: SpikeSlabPrior,
) -> BetaPosterior:
    """Posterior of beta in `Ry - mu_hat ~ N(RX beta, sigma2 I + Sigma_hat)` under
    a spike-and-slab prior, by enumeration of all 2^p supports.

    Raises:
        TooManyVariables: p exceeds `IRGAFLUX_ENUMERATION_MAX_VARIABLES`.
        SingularCovariance: `sigma2 I + Sigma_hat` is not positive definite.
    """
    _enumeration_guard(np.size(Ry), envs.enumeration_max_variables)
    d, RX, C = _step3_inputs(Ry, RX, summary, sigma2)
    G, b, base = _gaussian_statistics(d, RX, C, "sigma2 I + Sigma_hat")
    p = d.size
    return enumerate_supports(
        G, b, base, _bernoulli_model_prior(prior.lam, p), _spike_slab_terms(prior.psi)
    )


def gprior_beta_posterior(
    Ry: np.ndarray,
    RX: np.ndarray,
    summary: NuisanceSummary,
    sigma2: float,
    prior: GPrior,
) -> BetaPosterior:
    """Step 3 under the g-prior: `beta_gamma ~ N(0, sigma2 g_n (X_g^T X_g)^-1)`.

    Uses `X_g^T X_g = (RX)_g^T (RX)_g`, so the rotated design suffices.

    Raises:
        RankDeficient: some X_gamma does not have full column rank.
    """
    _enumeration_guard(np.size(Ry), envs.enumeration_max_variables)
    d, RX, C = _step3_inputs(Ry, RX, summary, sigma2)
    G, b, base = _gaussian_statistics(d, RX, C, "sigma2 I + Sigma_hat")
    scale = sigma2 * prior.g_n
    gram = RX.T @ RX

    def terms(idx: np.ndarray):
        check_full_rank(RX[:, idx])
        block = gram[np.ix_(idx, idx)]
        _, logdet_gram = np.linalg.slogdet(block)
        return block / scale, idx.size * np.log(scale) - logdet_gram

    return enumerate_supports(
        G, b, base, _bernoulli_model_prior(prior.lam, d.size), terms
    )


def gaussian_beta_posterior(
    Ry: np.ndarray,
    RX: np.ndarray,
    summary: NuisanceSummary,
    sigma2: float,
    prior: GaussianPrior,
) -> GaussianBetaPosterior:
    """Closed-form conjugate update of a Gaussian prior in the Step-3 model.

    Works in the covariance form so a singular prior covariance is allowed.
    """
    d, RX, C = _step3_inputs(Ry, RX, summary, sigma2)
    if prior.dim != d.size:
        raise DimensionMismatch(f"Prior of dimension {prior.dim} for p={d.size}")
    V0 = prior.covariance
    marginal = RX @ V0 @ RX.T + C
    chol = _cholesky_or_raise(marginal, "Marginal covariance of R^T y")
    resid = d - RX @ prior.mean
    gain = scipy.linalg.cho_solve(chol, RX @ V0).T
    mean = prior.mean + gain @ resid
    cov = V0 - gain @ RX @ V0
    cov = 0.5 * (cov + cov.T)
    log_evidence = float(_mvn_logpdf(resid[None, :], np.zeros(d.size), marginal)[0])
    return GaussianBetaPosterior(mean_=mean, cov=cov, log_evidence=log_evidence)


def inclusion_probs(post: AnyBetaPosterior) -> np.ndarray:
    """Marginal posterior inclusion probabilities."""
    return post.inclusion_probs()


def exact_selection_oracle(
    y: np.ndarray, A: np.ndarray, prior: SpikeSlabPrior, sigma2: float
) -> np.ndarray:
    """Exact inclusion probabilities of `y ~ N(A theta, sigma2 I)` under an
    independent spike-and-slab prior, by full 2^r enumeration.

    Raises:
        TooManyVariables: r exceeds `IRGAFLUX_ORACLE_MAX_VARIABLES`.
    """
    return selection_posterior(y, A, prior, sigma2).inclusion_probs()


def selection_posterior(
    y: np.ndarray, A: np.ndarray, prior: SpikeSlabPrior, sigma2: float
) -> BetaPosterior:
    y = np.asarray(y, dtype=float).ravel()
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2 or A.shape[0] != y.size:
        raise DimensionMismatch(f"A has shape {A.shape}, expected ({y.size}, r)")
    _enumeration_guard(A.shape[1], envs.oracle_max_variables)
    if not sigma2 > 0:
        raise ConfigError(f"sigma2 must be positive, got {sigma2}")
    G, b, base = _isotropic_statistics(y, A, sigma2)
    r = A.shape[1]
    return enumerate_supports(
        G, b, base, _bernoulli_model_prior(prior.lam, r), _spike_slab_terms(prior.psi)
    )


def gprior_log_marginal(
    y: np.ndarray, X_gamma: Optional[np.ndarray], g_n: float, sigma2: float
) -> float:
    """Log marginal likelihood of y under the g-prior model with design X_gamma.

    `N(y | 0, sigma2 (I + g_n H))` with H the hat matrix of X_gamma; the empty
    model (None or zero columns) gives `log N(y | 0, sigma2 I)`.

    Raises:
        RankDeficient: X_gamma does not have full column rank.
    """
    if not g_n > 0:
        raise ConfigError(f"g_n must be positive, got {g_n}")
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    null = -0.5 * (n * (_LOG_2PI + np.log(sigma2)) + y @ y / sigma2)
    if X_gamma is None or np.size(X_gamma) == 0:
        return float(null)
    X_gamma = np.asarray(X_gamma, dtype=float).reshape(n, -1)
    check_full_rank(X_gamma)
    k = X_gamma.shape[1]
    Q, _ = scipy.linalg.qr(X_gamma, mode="economic")
    projected = Q.T @ y
    shrink = g_n / (1.0 + g_n)
    return float(
        null - 0.5 * k * np.log1p(g_n) + 0.5 * shrink * (projected @ projected) / sigma2
    )


@dataclass(frozen=True)
class NuisanceMixture:
    """Exact law of the projected nuisance `R^T Z alpha | S^T y` under a
    spike-and-slab prior: a Gaussian mixture over the 2^q supports of alpha.
    """

    log_weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    alpha_posterior: Optional[BetaPosterior] = None

    @classmethod
    def gaussian(cls, summary: NuisanceSummary) -> "NuisanceMixture":
        """Single-component law, for Gaussian nuisances."""
        return cls(
            log_weights=np.zeros(1),
            means=summary.mu_hat[None, :],
            covs=summary.Sigma_hat[None, :, :],
        )

    @property
    def p(self) -> int:
        return self.means.shape[1]

    def moments(self) -> NuisanceSummary:
        w = np.exp(self.log_weights)
        mu = w @ self.means
        centered = self.means - mu
        cov = np.einsum("k,kij->ij", w, self.covs) + (centered.T * w) @ centered
        return NuisanceSummary(mu_hat=mu, Sigma_hat=0.5 * (cov + cov.T))

    def components(self) -> List[Tuple[float, NuisanceSummary]]:
        return [
            (float(lw), NuisanceSummary(mu_hat=m, Sigma_hat=0.5 * (c + c.T)))
            for lw, m, c in zip(self.log_weights, self.means, self.covs)
        ]

    def sample_convolved(
        self, size: int, sigma2: float, rng: np.random.Generator
    ) -> np.ndarray:
        """Draws of `a + b` with `a` from the mixture and `b ~ N(0, sigma2 I_p)`."""
        w = np.exp(self.log_weights)
        counts = rng.multinomial(size, w / w.sum())
        out = np.empty((size, self.p))
        start = 0
        noise = sigma2 * np.eye(self.p)
        for mean, cov, count in zip(self.means, self.covs, counts):
            if count:
                out[start : start + count] = rng.multivariate_normal(
                    mean, cov + noise, size=count, method="eigh"
                )
                start += count
        return out[rng.permutation(size)]

    def log_density_convolved(self, x: np.ndarray, sigma2: float) -> np.ndarray:
        x = np.atleast_2d(x)
        noise = sigma2 * np.eye(self.p)
        per_component = np.stack(
            [
                lw + _mvn_logpdf(x, mean, cov + noise)
                for lw, mean, cov in zip(self.log_weights, self.means, self.covs)
            ]
        )
        return logsumexp(per_component, axis=0)


def nuisance_mixture(
    Sy: np.ndarray,
    SZ: np.ndarray,
    RZ: np.ndarray,
    prior: SpikeSlabPrior,
    sigma2: float,
) -> NuisanceMixture:
    """Exact `R^T Z alpha | S^T y` by enumerating the supports of alpha.

    Raises:
        TooManyVariables: q exceeds `IRGAFLUX_ORACLE_MAX_VARIABLES`.
    """
    SZ = np.atleast_2d(np.asarray(SZ, dtype=float))
    RZ = np.atleast_2d(np.asarray(RZ, dtype=float))
    alpha_post = selection_posterior(Sy, SZ, prior, sigma2)
    p = RZ.shape[0]
    K = len(alpha_post.models)
    means = np.zeros((K, p))
    covs = np.zeros((K, p, p))
    for i, model in enumerate(alpha_post.models):
        if model.gamma:
            W = RZ[:, list(model.gamma)]
            means[i] = W @ model.cond_mean
            covs[i] = W @ model.cond_cov @ W.T
    log_weights = np.array([m.log_weight for m in alpha_post.models])
    return NuisanceMixture(
        log_weights=log_weights, means=means, covs=covs, alpha_posterior=alpha_post
    )


@dataclass(frozen=True)
class MixtureBetaPosterior:
    """Exact beta posterior when the projected nuisance law is a Gaussian mixture:
    a mixture, over nuisance components, of Step-3 posteriors.
    """

    log_weights: np.ndarray
    components: List[BetaPosterior]

    @property
    def p(self) -> int:
        return self.components[0].p

    def inclusion_probs(self) -> np.ndarray:
        w = np.exp(self.log_weights)
        return np.clip(sum(wi * c.inclusion_probs() for wi, c in zip(w, self.components)),
                       0.0, 1.0)

    def mean(self) -> np.ndarray:
        w = np.exp(self.log_weights)
        return sum(wi * c.mean() for wi, c in zip(w, self.components))

    def covariance(self) -> np.ndarray:
        w = np.exp(self.log_weights)
        second = sum(wi * c.second_moment() for wi, c in zip(w, self.components))
        mu = self.mean()
        return second - np.outer(mu, mu)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        w = np.exp(self.log_weights)
        counts = rng.multinomial(size, w / w.sum())
        parts = [c.sample(int(k), rng) for c, k in zip(self.components, counts) if k]
        return np.vstack(parts)[rng.permutation(size)]

    def log_density(self, draws: np.ndarray) -> np.ndarray:
        per_component = np.stack(
            [lw + c.log_density(draws) for lw, c in zip(self.log_weights, self.components)]
        )
        return logsumexp(per_component, axis=0)


def beta_posterior_mixture(
    Ry: np.ndarray,
    RX: np.ndarray,
    mixture: NuisanceMixture,
    sigma2: float,
    prior: SpikeSlabPrior,
) -> MixtureBetaPosterior:
    """Exact `beta | y` given the exact mixture law of `R^T eta | S^T y`."""
    posts = []
    log_w = []
    for lw, summary in mixture.components():
        post = beta_posterior(Ry, RX, summary, sigma2, prior)
        posts.append(post)
        log_w.append(lw + post.log_evidence)
    log_w = np.array(log_w)
    log_w -= logsumexp(log_w)
    logger.debug("Exact beta posterior over %d nuisance components", len(posts))
    return MixtureBetaPosterior(log_weights=log_w, components=posts)


def gaussian_nuisance_moments(
    V: np.ndarray, R: np.ndarray, S: np.ndarray, Sy: np.ndarray, sigma2: float
) -> NuisanceSummary:
    """Exact moments of `R^T eta | S^T y` when `eta ~ N(0, V)`.

    `(R^T eta, S^T y)` is jointly Gaussian, so the conditional is Gaussian with
    the usual Schur-complement moments.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    n = R.shape[0]
    if V.shape != (n, n):
        raise DimensionMismatch(f"Nuisance covariance of shape {V.shape} for n={n}")
    VR = V @ R
    VS = V @ S
    marginal = S.T @ VS + sigma2 * np.eye(S.shape[1])
    chol = _cholesky_or_raise(marginal, "Covariance of S^T y")
    gain = scipy.linalg.cho_solve(chol, VS.T @ R).T
    mu = gain @ Sy
    cov = R.T @ VR - gain @ (S.T @ VR)
    return NuisanceSummary(mu_hat=mu, Sigma_hat=0.5 * (cov + cov.T))
