from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np

from irgaflux.exact_posterior import NuisanceMixture, NuisanceSummary
from irgaflux.exceptions import IncompatibleEstimator
from irgaflux.priors import SpikeSlabPrior
from irgaflux.rotation import Dataset, RotatedData, RotationSplit
from irgaflux.utils.msgspec import struct_to_dict
from irgaflux.vamp import AlphaPosteriorSummary


@dataclass(frozen=True)
class NuisanceEstimate:
    """Output of Step 2: Gaussian moments of `R^T eta | S^T y` and the sigma2
    that produced them, plus whatever richer object the strategy computed.
    """

    summary: NuisanceSummary
    sigma2: float
    alpha: Optional[AlphaPosteriorSummary] = None
    mixture: Optional[NuisanceMixture] = None
    laplace: Optional[Any] = None
    converged: bool = True


def residual_variance(rotated: RotatedData) -> float:
    """Least-squares residual variance of y on X, `||S^T y||^2 / (n - p)`."""
    m = rotated.Sy.size
    if m < 1:
        raise IncompatibleEstimator("Estimating sigma2 needs n > p")
    value = float(rotated.Sy @ rotated.Sy / m)
    if not value > 0:
        raise IncompatibleEstimator("Residual variance is zero; pass sigma2 explicitly")
    return value


class BaseEstimator(ABC):
    """A Step-2 strategy: summarizes `R^T eta | S^T y` by a mean and covariance.

    Subclasses define `name`, implement `estimate` and declare whether they need
    nuisance features (`requires_features`) or a known sigma2
    (`requires_sigma2`).
    """

    irgaflux_type = "estimator"
    name: str = ""
    requires_features: bool = False
    requires_sigma2: bool = False
    to_ignore: List[str] = []

    def check_compatible(self, data: Dataset, sigma2: Optional[float] = None) -> None:
        if self.requires_features and data.Z is None:
            raise IncompatibleEstimator(
                f"Estimator `{self.name}` needs nuisance features (z_ columns)"
            )
        if self.requires_sigma2 and sigma2 is None:
            raise IncompatibleEstimator(f"Estimator `{self.name}` needs a known sigma2")

    def __call__(
        self,
        data: Dataset,
        split: RotationSplit,
        rotated: RotatedData,
        sigma2: Optional[float] = None,
        prior: Optional[SpikeSlabPrior] = None,
    ) -> NuisanceEstimate:
        self.check_compatible(data, sigma2)
        return self.estimate(data, split, rotated, sigma2, prior)

    @abstractmethod
    def estimate(
        self,
        data: Dataset,
        split: RotationSplit,
        rotated: RotatedData,
        sigma2: Optional[float],
        prior: Optional[SpikeSlabPrior],
    ) -> NuisanceEstimate:
        raise NotImplementedError

    def with_seed(self, seed: int) -> "BaseEstimator":
        """Copy whose random draws use `seed`; deterministic strategies return self."""
        return self

    def _nuisance_prior(self, prior: Optional[SpikeSlabPrior]) -> SpikeSlabPrior:
        own = getattr(self, "prior", None)
        if own is not None:
            return own
        if prior is None:
            raise IncompatibleEstimator(
                f"Estimator `{self.name}` needs a spike-and-slab prior on alpha"
            )
        return prior

    def serialize(self) -> Dict[str, Any]:
        """Plain-dict record of the strategy and its configuration."""
        state = {
            k: struct_to_dict(v)
            for k, v in self.__dict__.items()
            if k not in self.to_ignore and not k.startswith("_")
        }
        for key, value in list(state.items()):
            if isinstance(value, SpikeSlabPrior):
                state[key] = {"lam": value.lam, "psi": value.psi}
        return {"irgaflux_type": self.irgaflux_type, "name": self.name, "state": state}

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}({self.serialize()['state']})"


def project_alpha_moments(
    RZ: np.ndarray, mean: np.ndarray, variances: np.ndarray, covariance: str = "diagonal"
) -> NuisanceSummary:
    """Moments of `RZ alpha` for alpha with independent coordinates.

    `covariance="scalar"` replaces `RZ diag(v) RZ^T` by `t I_p` with t its
    average eigenvalue.
    """
    mu = RZ @ mean
    cov = (RZ * variances) @ RZ.T
    if covariance == "scalar":
        p = RZ.shape[0]
        cov = (np.trace(cov) / p) * np.eye(p)
    return NuisanceSummary(mu_hat=mu, Sigma_hat=0.5 * (cov + cov.T))
