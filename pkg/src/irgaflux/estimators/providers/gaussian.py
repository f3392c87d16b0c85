from typing import Optional

import numpy as np

from irgaflux.estimators.base import BaseEstimator, NuisanceEstimate
from irgaflux.estimators.registry import register_estimator
from irgaflux.exact_posterior import NuisanceMixture, gaussian_nuisance_moments
from irgaflux.priors import SpikeSlabPrior
from irgaflux.rotation import Dataset, RotatedData, RotationSplit


@register_estimator
class GaussianEstimator(BaseEstimator):
    """Known Gaussian nuisance `eta ~ N(0, V)`: the conditional moments of
    `R^T eta | S^T y` are exact.
    """

    name = "gaussian"
    requires_sigma2 = True
    to_ignore = ["covariance"]

    def __init__(self, covariance: np.ndarray):
        self.covariance = np.atleast_2d(np.asarray(covariance, dtype=float))
        self.n = self.covariance.shape[0]

    def estimate(
        self,
        data: Dataset,
        split: RotationSplit,
        rotated: RotatedData,
        sigma2: Optional[float],
        prior: Optional[SpikeSlabPrior],
    ) -> NuisanceEstimate:
        summary = gaussian_nuisance_moments(
            self.covariance, split.R, split.S, rotated.Sy, sigma2
        )
        return NuisanceEstimate(
            summary=summary, sigma2=sigma2, mixture=NuisanceMixture.gaussian(summary)
        )
