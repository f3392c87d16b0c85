from typing import Optional

from irgaflux.estimators.base import (
    BaseEstimator,
    NuisanceEstimate,
    project_alpha_moments,
    residual_variance,
)
from irgaflux.estimators.registry import register_estimator
from irgaflux.logger import logger
from irgaflux.priors import SpikeSlabPrior
from irgaflux.rotation import Dataset, RotatedData, RotationSplit
from irgaflux.vamp import VampConfig, vamp_fit, with_sigma2


@register_estimator
class VampEstimator(BaseEstimator):
    """VAMP on the nuisance submodel; `mu_hat = RZ xi` and `Sigma_hat` from the
    per-coordinate variances (diagonal embedding or scalar form).
    """

    name = "vamp"
    requires_features = True

    def __init__(
        self,
        config: Optional[VampConfig] = None,
        prior: Optional[SpikeSlabPrior] = None,
    ):
        self.config = config or VampConfig()
        self.prior = prior

    def estimate(
        self,
        data: Dataset,
        split: RotationSplit,
        rotated: RotatedData,
        sigma2: Optional[float],
        prior: Optional[SpikeSlabPrior],
    ) -> NuisanceEstimate:
        prior = self._nuisance_prior(prior)
        config = with_sigma2(self.config, estimate=sigma2 is None)
        sigma2_init = sigma2 if sigma2 is not None else residual_variance(rotated)
        alpha = vamp_fit(rotated.Sy, rotated.SZ, prior, sigma2_init, config)
        summary = project_alpha_moments(
            rotated.RZ, alpha.mean, alpha.variances, config.nuisance_covariance
        )
        logger.info(
            "VAMP nuisance fit: %d iterations, converged=%s, sigma2=%.6g",
            alpha.iters_used,
            alpha.converged,
            alpha.sigma2_hat,
        )
        return NuisanceEstimate(
            summary=summary,
            sigma2=alpha.sigma2_hat,
            alpha=alpha,
            converged=alpha.converged,
        )
