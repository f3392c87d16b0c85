"""Seeded data generators for every experiment family.

Ground truth travels in a `GroundTruth` sidecar and never inside the
`Dataset`, so estimators cannot see it.
"""

from dataclasses import dataclass
from typing import List, Literal, NamedTuple, Optional, Sequence, Tuple

import msgspec
import numpy as np
import scipy.linalg

from irgaflux.exceptions import ConfigError
from irgaflux.gp_nuisance import LINKS, kernel_matrix
from irgaflux.io import write_dataset_csv
from irgaflux.logger import logger
from irgaflux.priors import SpikeSlabPrior
from irgaflux.rotation import Dataset

Family = Literal["covariate_adjust", "selection", "gp", "consistency", "gaussian_nuisance"]

GP_SIGNAL = (4.0, -4.0, 4.0)
GP_RHO = 0.9
CONSISTENCY_SIGNAL = (1.0, -1.0, 1.0, 0.0)


class ScenarioSpec(msgspec.Struct, kw_only=True):
    """Data-generating configuration.

    `q` is the nuisance width (covariate_adjust, consistency, gaussian_nuisance);
    `r` the total number of candidate variables (selection). `rho` sets the
    Toeplitz correlation `rho^|i-j|` between the columns of X; left unset it is
    0.9 for `gp` and 0 otherwise. `nuisance_correlation` mixes each column of Z
    with a random unit combination of the columns of X, so that Z explains part
    of X. `signal` fixes beta (theta for selection); otherwise it is drawn from
    the spike-and-slab prior `(lam, psi)`.
    """

    family: Family
    n: int = 100
    p: int = 3
    q: int = 0
    r: int = 0
    rho: Optional[float] = None
    lam: float = 0.25
    psi: float = 1.0
    sigma2: float = 1.0
    signal: Optional[List[float]] = None
    nuisance_signal: Optional[List[float]] = None
    nuisance_correlation: float = 0.0
    lengthscale_sq: float = 10.0
    link: Literal["square", "identity"] = "square"
    known_sigma2: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.rho is None:
            self.rho = GP_RHO if self.family == "gp" else 0.0
        if self.n < 1 or self.p < 1:
            raise ConfigError(f"Need n >= 1 and p >= 1, got n={self.n}, p={self.p}")
        if not -1.0 < self.rho < 1.0:
            raise ConfigError(f"rho must lie in (-1, 1), got {self.rho}")
        if not -1.0 < self.nuisance_correlation < 1.0:
            raise ConfigError(
                f"nuisance_correlation must lie in (-1, 1), got {self.nuisance_correlation}"
            )
        if not self.sigma2 > 0:
            raise ConfigError(f"sigma2 must be positive, got {self.sigma2}")
        if self.family == "selection":
            if self.r < 2 or self.r > self.n:
                raise ConfigError(f"selection needs 2 <= r <= n, got r={self.r}")
            width = self.r
        else:
            if self.p > self.n:
                raise ConfigError(f"Need p <= n, got p={self.p}, n={self.n}")
            width = self.p
            if self.family in ("covariate_adjust", "gaussian_nuisance") and self.q < 1:
                raise ConfigError(f"family `{self.family}` needs q >= 1")
        if self.signal is not None and len(self.signal) != width:
            raise ConfigError(f"signal has {len(self.signal)} entries, expected {width}")
        if self.nuisance_signal is not None and len(self.nuisance_signal) != self.q:
            raise ConfigError(
                f"nuisance_signal has {len(self.nuisance_signal)} entries, expected {self.q}"
            )


@dataclass(frozen=True)
class GroundTruth:
    beta: np.ndarray
    gamma: Tuple[int, ...]
    sigma2: float
    alpha: Optional[np.ndarray] = None
    eta: Optional[np.ndarray] = None
    F: Optional[np.ndarray] = None
    nuisance_covariance: Optional[np.ndarray] = None


class Scenario(NamedTuple):
    data: Dataset
    truth: GroundTruth


def toeplitz_rows(n: int, width: int, rho: float, rng: np.random.Generator) -> np.ndarray:
    """n rows from `N(0, Phi)` with `Phi_ij = rho^|i-j|`."""
    if rho == 0.0:
        return rng.standard_normal((n, width))
    phi = scipy.linalg.toeplitz(rho ** np.arange(width))
    return rng.standard_normal((n, width)) @ scipy.linalg.cholesky(phi, lower=False)


def _coefficients(values, width, lam, psi, rng) -> np.ndarray:
    if values is not None:
        return np.asarray(values, dtype=float)
    return SpikeSlabPrior(lam=lam, psi=psi).sample(width, rng)


def _support(beta: np.ndarray) -> Tuple[int, ...]:
    return tuple(int(j) for j in np.flatnonzero(beta))


def _dataset(spec: ScenarioSpec, y, X, Z=None) -> Dataset:
    return Dataset(y=y, X=X, Z=Z, sigma2=spec.sigma2 if spec.known_sigma2 else None)


def generate(spec: ScenarioSpec) -> Scenario:
    """Draw one dataset and its ground truth; bit-identical for a fixed seed."""
    rng = np.random.default_rng(spec.seed)
    noise_sd = np.sqrt(spec.sigma2)
    family = spec.family

    if family == "selection":
        A = toeplitz_rows(spec.n, spec.r, spec.rho, rng)
        theta = _coefficients(spec.signal, spec.r, spec.lam, spec.psi, rng)
        y = A @ theta + noise_sd * rng.standard_normal(spec.n)
        truth = GroundTruth(beta=theta, gamma=_support(theta), sigma2=spec.sigma2)
        return Scenario(_dataset(spec, y, A), truth)

    if family == "gp":
        X = toeplitz_rows(spec.n, spec.p, spec.rho, rng)
        signal = spec.signal if spec.signal is not None else GP_SIGNAL[: spec.p]
        beta = _coefficients(signal, spec.p, spec.lam, spec.psi, rng)
        z = X[:, 0].copy()
        K = kernel_matrix(z, spec.lengthscale_sq)
        K[np.diag_indices_from(K)] += 1e-8
        F = scipy.linalg.cholesky(K, lower=True) @ rng.standard_normal(spec.n)
        eta = LINKS[spec.link].g(F)
        y = X @ beta + eta + noise_sd * rng.standard_normal(spec.n)
        truth = GroundTruth(
            beta=beta, gamma=_support(beta), sigma2=spec.sigma2, eta=eta, F=F
        )
        return Scenario(_dataset(spec, y, X, z[:, None]), truth)

    X = toeplitz_rows(spec.n, spec.p, spec.rho, rng)
    if family == "consistency":
        signal = spec.signal if spec.signal is not None else CONSISTENCY_SIGNAL[: spec.p]
        beta = np.asarray(signal, dtype=float)
    else:
        beta = _coefficients(spec.signal, spec.p, spec.lam, spec.psi, rng)

    covariance = None
    if spec.q == 0:
        alpha = None
        eta = np.zeros(spec.n)
        Z = None
    else:
        Z = rng.standard_normal((spec.n, spec.q))
        if spec.nuisance_correlation:
            c = spec.nuisance_correlation
            U = rng.standard_normal((spec.p, spec.q))
            U /= np.linalg.norm(U, axis=0)
            Z = c * (X @ U) + np.sqrt(1.0 - c**2) * Z
        if family == "gaussian_nuisance":
            alpha = np.sqrt(spec.psi) * rng.standard_normal(spec.q)
            covariance = spec.psi * (Z @ Z.T)
        else:
            alpha = _coefficients(spec.nuisance_signal, spec.q, spec.lam, spec.psi, rng)
        eta = Z @ alpha
    y = X @ beta + eta + noise_sd * rng.standard_normal(spec.n)
    truth = GroundTruth(
        beta=beta,
        gamma=_support(beta),
        sigma2=spec.sigma2,
        alpha=alpha,
        eta=eta,
        nuisance_covariance=covariance,
    )
    return Scenario(_dataset(spec, y, X, Z), truth)


def generate_sequence(spec: ScenarioSpec, ns: Sequence[int]) -> List[Scenario]:
    """Nested datasets: the first n rows of one draw at `max(ns)`, for each n."""
    n_max = max(ns)
    full = generate(msgspec.structs.replace(spec, n=n_max))
    scenarios = []
    for n in ns:
        data = full.data
        Z = None if data.Z is None else data.Z[:n]
        eta = None if full.truth.eta is None else full.truth.eta[:n]
        scenarios.append(
            Scenario(
                Dataset(y=data.y[:n], X=data.X[:n], Z=Z, sigma2=data.sigma2),
                GroundTruth(
                    beta=full.truth.beta,
                    gamma=full.truth.gamma,
                    sigma2=full.truth.sigma2,
                    alpha=full.truth.alpha,
                    eta=eta,
                ),
            )
        )
    logger.debug("Generated nested %s sequence for n in %s", spec.family, list(ns))
    return scenarios


def export_csv(scenario: Scenario, path: str) -> None:
    """Write the model-facing data in the CLI's CSV layout (ground truth excluded)."""
    write_dataset_csv(scenario.data, path)
