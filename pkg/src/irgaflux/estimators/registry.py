from typing import Dict, Type

from irgaflux.estimators.base import BaseEstimator

estimator_registry: Dict[str, Type[BaseEstimator]] = {}  # estimator_registry[name] = cls


def register_estimator(cls: Type[BaseEstimator]) -> Type[BaseEstimator]:
    name = getattr(cls, "name", None)
    if not name:
        raise ValueError(f"{cls.__name__} must define `name`.")
    estimator_registry[name] = cls
    return cls
