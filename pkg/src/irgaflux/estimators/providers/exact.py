from typing import Optional

from irgaflux.estimators.base import BaseEstimator, NuisanceEstimate, residual_variance
from irgaflux.estimators.registry import register_estimator
from irgaflux.exact_posterior import nuisance_mixture
from irgaflux.logger import logger
from irgaflux.priors import SpikeSlabPrior
from irgaflux.rotation import Dataset, RotatedData, RotationSplit
from irgaflux.vamp import VampConfig, vamp_fit


@register_estimator
class ExactEstimator(BaseEstimator):
    """Exact moments of `R^T Z alpha | S^T y` from the 2^q mixture over the
    supports of alpha (q limited by `IRGAFLUX_ORACLE_MAX_VARIABLES`).

    An unknown sigma2 is first estimated by a VAMP fit of the same submodel.
    """

    name = "exact"
    requires_features = True

    def __init__(
        self,
        prior: Optional[SpikeSlabPrior] = None,
        sigma2_config: Optional[VampConfig] = None,
    ):
        self.prior = prior
        self.sigma2_config = sigma2_config or VampConfig()

    def estimate(
        self,
        data: Dataset,
        split: RotationSplit,
        rotated: RotatedData,
        sigma2: Optional[float],
        prior: Optional[SpikeSlabPrior],
    ) -> NuisanceEstimate:
        prior = self._nuisance_prior(prior)
        if sigma2 is None:
            fit = vamp_fit(
                rotated.Sy, rotated.SZ, prior, residual_variance(rotated), self.sigma2_config
            )
            sigma2 = fit.sigma2_hat
            logger.info("sigma2 estimated by VAMP before enumeration: %.6g", sigma2)
        mixture = nuisance_mixture(rotated.Sy, rotated.SZ, rotated.RZ, prior, sigma2)
        return NuisanceEstimate(summary=mixture.moments(), sigma2=sigma2, mixture=mixture)
