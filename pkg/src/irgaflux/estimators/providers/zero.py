from typing import Optional

from irgaflux.estimators.base import BaseEstimator, NuisanceEstimate, residual_variance
from irgaflux.estimators.registry import register_estimator
from irgaflux.exact_posterior import NuisanceSummary
from irgaflux.logger import logger
from irgaflux.priors import SpikeSlabPrior
from irgaflux.rotation import Dataset, RotatedData, RotationSplit


@register_estimator
class ZeroEstimator(BaseEstimator):
    """Ignores the nuisance: `mu_hat = 0`, `Sigma_hat = 0`.

    Without a known sigma2 the least-squares residual variance is used.
    """

    name = "zero"

    def estimate(
        self,
        data: Dataset,
        split: RotationSplit,
        rotated: RotatedData,
        sigma2: Optional[float],
        prior: Optional[SpikeSlabPrior],
    ) -> NuisanceEstimate:
        if sigma2 is None:
            sigma2 = residual_variance(rotated)
            logger.info("sigma2 set to the least-squares residual variance %.6g", sigma2)
        return NuisanceEstimate(summary=NuisanceSummary.zero(data.p), sigma2=sigma2)
