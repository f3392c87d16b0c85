from typing import Any, Dict, Optional


class IrgaError(Exception):
    """Base class of every error raised by irgaflux.

    Each family carries the CLI exit code it maps to.
    """

    exit_code: int = 1

    def __init__(self, message: Optional[str] = None, **details: Any):
        self.message = message or self.__class__.__name__
        self.details = details
        super().__init__(self.message)

    def to_record(self) -> Dict[str, Any]:
        """Machine-readable error record written by the CLI."""
        record = {
            "error": self.__class__.__name__,
            "message": self.message,
            "exit_code": self.exit_code,
        }
        if self.details:
            record["details"] = {k: _plain(v) for k, v in self.details.items()}
        return record


def _plain(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    try:
        return float(value)
    except (TypeError, ValueError):
        return str(value)


class ParseError(IrgaError):
    exit_code = 2


class ConfigError(IrgaError, ValueError):
    exit_code = 3


class DimensionMismatch(ConfigError):
    pass


class IncompatibleEstimator(ConfigError):
    pass


class EstimatorNotFoundError(ConfigError):
    """Raised when a requested nuisance estimator is not registered."""


class NumericalError(IrgaError, ArithmeticError):
    exit_code = 4


class RankDeficient(NumericalError):
    pass


class InvalidVariance(NumericalError):
    pass


class NumericalDivergence(NumericalError):
    pass


class SingularCovariance(NumericalError):
    pass


class SingularKernel(NumericalError):
    pass


class DegenerateCovariance(NumericalError):
    pass


class UnboundedRatio(NumericalError):
    pass


class TraceTooShort(NumericalError):
    pass


class ResourceLimitError(IrgaError):
    exit_code = 5


class TooManyVariables(ResourceLimitError):
    def __init__(self, given: int, limit: int, what: str = "variables"):
        super().__init__(
            f"Enumeration over {given} {what} exceeds the limit of {limit}",
            given=given,
            limit=limit,
        )
