from typing import Any, Dict, List, Mapping, Optional, Type

import numpy as np

from irgaflux.estimators.base import BaseEstimator
from irgaflux.estimators.registry import estimator_registry
from irgaflux.exceptions import EstimatorNotFoundError
from irgaflux.gp_nuisance import GpConfig
from irgaflux.priors import SpikeSlabPrior
from irgaflux.vamp import VampConfig


class NuisanceEstimator:
    """Constructors of the registered Step-2 strategies."""

    @classmethod
    def providers(cls) -> List[str]:
        return sorted(estimator_registry.keys())

    @classmethod
    def _get_estimator_class(cls, name: str) -> Type[BaseEstimator]:
        if name not in estimator_registry:
            raise EstimatorNotFoundError(
                f"Nuisance estimator `{name}` is not registered; "
                f"available: {cls.providers()}"
            )
        return estimator_registry[name]

    @classmethod
    def from_name(cls, name: str, **kwargs) -> BaseEstimator:
        return cls._get_estimator_class(name)(**kwargs)

    @classmethod
    def from_serialized(cls, record: Mapping[str, Any]) -> BaseEstimator:
        """Rebuild a strategy from the record produced by `serialize()`.

        Only strategies whose state is plain configuration can be restored;
        `gaussian` needs its covariance matrix and is rebuilt by the caller.
        """
        name = record["name"]
        state = dict(record.get("state", {}))
        kwargs: Dict[str, Any] = {}
        if state.get("prior") is not None:
            kwargs["prior"] = SpikeSlabPrior(**state["prior"])
        if name == "vamp":
            kwargs["config"] = VampConfig(**state["config"])
        elif name == "exact":
            kwargs["sigma2_config"] = VampConfig(**state["sigma2_config"])
        elif name == "gp_laplace":
            kwargs = {"config": GpConfig(**state["config"])}
        elif name == "zero":
            kwargs = {}
        return cls.from_name(name, **kwargs)

    @classmethod
    def vamp(
        cls, config: Optional[VampConfig] = None, prior: Optional[SpikeSlabPrior] = None
    ) -> BaseEstimator:
        return cls.from_name("vamp", config=config, prior=prior)

    @classmethod
    def exact(
        cls,
        prior: Optional[SpikeSlabPrior] = None,
        sigma2_config: Optional[VampConfig] = None,
    ) -> BaseEstimator:
        return cls.from_name("exact", prior=prior, sigma2_config=sigma2_config)

    @classmethod
    def gp_laplace(cls, config: Optional[GpConfig] = None) -> BaseEstimator:
        return cls.from_name("gp_laplace", config=config)

    @classmethod
    def zero(cls) -> BaseEstimator:
        return cls.from_name("zero")

    @classmethod
    def gaussian(cls, covariance: np.ndarray) -> BaseEstimator:
        return cls.from_name("gaussian", covariance=covariance)
