from typing import Optional

import msgspec

from irgaflux.estimators.base import BaseEstimator, NuisanceEstimate
from irgaflux.estimators.registry import register_estimator
from irgaflux.gp_nuisance import GpConfig, gp_laplace_fit, gp_nuisance_summary
from irgaflux.logger import logger
from irgaflux.priors import SpikeSlabPrior
from irgaflux.rotation import Dataset, RotatedData, RotationSplit


@register_estimator
class GpLaplaceEstimator(BaseEstimator):
    """GP nuisance `eta_i = g(f(z_i))`; the z_ columns of the data are the GP
    inputs. Moments of `R^T G(F)` come from Laplace draws of F.
    """

    name = "gp_laplace"
    requires_features = True
    requires_sigma2 = True

    def __init__(self, config: Optional[GpConfig] = None):
        self.config = config or GpConfig()

    def with_seed(self, seed: int) -> "GpLaplaceEstimator":
        return GpLaplaceEstimator(msgspec.structs.replace(self.config, seed=seed))

    def estimate(
        self,
        data: Dataset,
        split: RotationSplit,
        rotated: RotatedData,
        sigma2: Optional[float],
        prior: Optional[SpikeSlabPrior],
    ) -> NuisanceEstimate:
        fit = gp_laplace_fit(rotated.Sy, split.S, data.Z, self.config, sigma2)
        logger.info(
            "GP Laplace fit: %d Gauss-Newton iterations, converged=%s",
            fit.iterations,
            fit.converged,
        )
        summary = gp_nuisance_summary(fit, split.R, self.config)
        return NuisanceEstimate(
            summary=summary, sigma2=sigma2, laplace=fit, converged=fit.converged
        )
