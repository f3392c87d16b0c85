from irgaflux.estimators.base import BaseEstimator, NuisanceEstimate
from irgaflux.estimators.estimator import NuisanceEstimator
from irgaflux.estimators.registry import estimator_registry, register_estimator
from irgaflux.utils.imports import autoload_package

autoload_package("irgaflux.estimators.providers")

__all__ = [
    "BaseEstimator",
    "NuisanceEstimate",
    "NuisanceEstimator",
    "estimator_registry",
    "register_estimator",
]
