"""Gaussian-process nuisance `eta_i = g(f(z_i))` fitted by a Laplace approximation.

The latent vector is whitened, `F = L u` with `L L^T = K + jitter I` and
`u ~ N(0, I)`, so the kernel only ever enters through its Cholesky factor.
Gauss-Newton linearizes `G(F)` around the current iterate and solves the
resulting Gaussian problem; a backtracking search on the exact log posterior
keeps the iteration monotone.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Literal, NamedTuple

import msgspec
import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

from irgaflux.exact_posterior import NuisanceSummary
from irgaflux.exceptions import ConfigError, DimensionMismatch, SingularKernel
from irgaflux.logger import log_progress, logger

LinkName = Literal["square", "identity"]


class Link(NamedTuple):
    g: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]


LINKS: Dict[str, Link] = {
    "square": Link(g=lambda a: a * a, grad=lambda a: 2.0 * a),
    "identity": Link(g=lambda a: a, grad=np.ones_like),
}


class GpConfig(msgspec.Struct, kw_only=True):
    """Controls of the GP nuisance fit.

    The kernel is `exp(-||z_i - z_j||^2 / lengthscale_sq)`. Gauss-Newton starts
    from `u = init_scale * eps` drawn with `seed`; the square link has a zero
    gradient at `u = 0`.
    """

    lengthscale_sq: float = 10.0
    link: LinkName = "square"
    jitter: float = 1e-8
    gn_max_iters: int = 100
    gn_tol: float = 1e-8
    max_halvings: int = 30
    init_scale: float = 0.1
    n_samples: int = 4096
    seed: int = 0

    def __post_init__(self):
        if not self.lengthscale_sq > 0:
            raise ConfigError(f"lengthscale_sq must be positive, got {self.lengthscale_sq}")
        if not self.jitter > 0:
            raise ConfigError(f"jitter must be positive, got {self.jitter}")
        if self.n_samples < 100:
            raise ConfigError(f"n_samples must be at least 100, got {self.n_samples}")
        if self.gn_max_iters < 1:
            raise ConfigError("gn_max_iters must be positive")
        if self.init_scale < 0:
            raise ConfigError(f"init_scale must be nonnegative, got {self.init_scale}")
        if self.link not in LINKS:
            raise ConfigError(f"Unknown link `{self.link}`")

    @property
    def link_fns(self) -> Link:
        return LINKS[self.link]


def kernel_matrix(features: np.ndarray, lengthscale_sq: float) -> np.ndarray:
    """Squared-exponential kernel over the rows of `features`."""
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features[:, None]
    return np.exp(-cdist(features, features, "sqeuclidean") / lengthscale_sq)


def kernel_cholesky(features: np.ndarray, config: GpConfig) -> np.ndarray:
    """Lower Cholesky factor of `K + jitter I`.

    Raises:
        SingularKernel: the jittered kernel is not positive definite.
    """
    K = kernel_matrix(features, config.lengthscale_sq)
    K[np.diag_indices_from(K)] += config.jitter
    try:
        return scipy.linalg.cholesky(K, lower=True)
    except np.linalg.LinAlgError as e:
        raise SingularKernel(
            "Kernel matrix is not positive definite; increase the jitter",
            jitter=config.jitter,
        ) from e


@dataclass(frozen=True)
class LaplaceFit:
    """Laplace approximation of `F | S^T y` in whitened coordinates.

    `precision_factor` is the lower Cholesky factor of the precision of u,
    `I + J^T J / sigma2` with `J = S^T diag(g'(F_mode)) L`.
    """

    F_mode: np.ndarray
    u_mode: np.ndarray
    kernel_factor: np.ndarray
    precision_factor: np.ndarray
    converged: bool
    iterations: int
    log_posterior: float
    link: LinkName = "square"

    def sample_F(self, size: int, rng: np.random.Generator) -> np.ndarray:
        eps = rng.standard_normal((size, self.u_mode.size))
        offsets = scipy.linalg.solve_triangular(
            self.precision_factor.T, eps.T, lower=False
        ).T
        return (self.u_mode + offsets) @ self.kernel_factor.T

    def covariance_F(self) -> np.ndarray:
        """Laplace covariance of F (dense, n x n)."""
        inv_factor = scipy.linalg.solve_triangular(
            self.precision_factor, self.kernel_factor.T, lower=True
        )
        return inv_factor.T @ inv_factor


def _log_posterior(u, Sy, S, L, link: Link, sigma2) -> float:
    resid = Sy - S.T @ link.g(L @ u)
    return float(-0.5 * u @ u - 0.5 * resid @ resid / sigma2)


def _jacobian(u, S, L, link: Link) -> np.ndarray:
    return (S.T * link.grad(L @ u)) @ L


def _is_stationary(u, J, resid, sigma2, tol) -> bool:
    gradient = J.T @ resid / sigma2 - u
    return bool(np.linalg.norm(gradient) <= tol * max(np.linalg.norm(u), 1.0))


def gp_laplace_fit(
    Sy: np.ndarray,
    S: np.ndarray,
    features: np.ndarray,
    config: GpConfig,
    sigma2: float,
) -> LaplaceFit:
    """Gauss-Newton mode search and Laplace precision for `F | S^T y`.

    Args:
        Sy:
            Rotated observations of the nuisance submodel, length n - p.
        S:
            n x (n - p) orthonormal complement of the design.
        features:
            n x q_z GP inputs.
        config:
            Kernel, link and iteration controls.
        sigma2:
            Known error variance.

    Returns:
        The fit; `converged` is False when `gn_max_iters` ran out or the line
        search stalled with a whitened gradient above `sqrt(gn_tol)` (relative
        to the iterate). The last accepted iterate is returned either way.

    Raises:
        SingularKernel: the jittered kernel cannot be factorized.
    """
    if not sigma2 > 0:
        raise ConfigError(f"sigma2 must be positive, got {sigma2}")
    Sy = np.asarray(Sy, dtype=float).ravel()
    S = np.asarray(S, dtype=float)
    if S.shape[1] != Sy.size:
        raise DimensionMismatch(f"S has {S.shape[1]} columns but Sy has {Sy.size} entries")
    features = np.asarray(features, dtype=float)
    if features.shape[0] != S.shape[0]:
        raise DimensionMismatch(
            f"{features.shape[0]} feature rows for n={S.shape[0]} observations"
        )
    link = config.link_fns
    L = kernel_cholesky(features, config)
    n = L.shape[0]
    u = config.init_scale * np.random.default_rng(config.seed).standard_normal(n)
    objective = _log_posterior(u, Sy, S, L, link, sigma2)
    converged = False
    iteration = 0
    for iteration in range(1, config.gn_max_iters + 1):  # noqa: B007
        J = _jacobian(u, S, L, link)
        resid = Sy - S.T @ link.g(L @ u)
        precision = np.eye(n) + J.T @ J / sigma2
        target = scipy.linalg.cho_solve(
            scipy.linalg.cho_factor(precision, lower=True),
            J.T @ (resid + J @ u) / sigma2,
        )
        direction = target - u
        step = 1.0
        accepted = False
        for _ in range(config.max_halvings):
            candidate = u + step * direction
            value = _log_posterior(candidate, Sy, S, L, link, sigma2)
            if value >= objective:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = _is_stationary(u, J, resid, sigma2, np.sqrt(config.gn_tol))
            log_progress("Gauss-Newton line search stalled at iteration %d", iteration)
            break
        change = np.linalg.norm(candidate - u) / max(np.linalg.norm(u), 1.0)
        u, objective = candidate, value
        log_progress(
            "Gauss-Newton iteration %d: log posterior %.6f, step %.3g, change %.3e",
            iteration,
            objective,
            step,
            change,
        )
        if change < config.gn_tol:
            converged = True
            break
    if not converged:
        logger.warning(
            "Gauss-Newton stopped at iteration %d away from a stationary point; "
            "returning the last iterate",
            iteration,
        )
    J = _jacobian(u, S, L, link)
    precision = np.eye(n) + J.T @ J / sigma2
    precision_factor = scipy.linalg.cholesky(0.5 * (precision + precision.T), lower=True)
    return LaplaceFit(
        F_mode=L @ u,
        u_mode=u,
        kernel_factor=L,
        precision_factor=precision_factor,
        converged=converged,
        iterations=iteration,
        log_posterior=objective,
        link=config.link,
    )


def gp_nuisance_summary(fit: LaplaceFit, R: np.ndarray, config: GpConfig) -> NuisanceSummary:
    """Sample mean and covariance of `R^T G(F)` under the Laplace approximation."""
    rng = np.random.default_rng(config.seed)
    F = fit.sample_F(config.n_samples, rng)
    projected = LINKS[fit.link].g(F) @ np.asarray(R, dtype=float)
    mu = projected.mean(axis=0)
    cov = np.atleast_2d(np.cov(projected, rowvar=False))
    logger.debug("GP nuisance moments from %d Laplace draws", config.n_samples)
    return NuisanceSummary(mu_hat=mu, Sigma_hat=0.5 * (cov + cov.T))


__all__ = [
    "LINKS",
    "GpConfig",
    "LaplaceFit",
    "gp_laplace_fit",
    "gp_nuisance_summary",
    "kernel_cholesky",
    "kernel_matrix",
]
