"""Conservative SPDEs with truncated noise as fluctuating hydrodynamics for symmetric exclusion."""

from .errors import NumericalError, ValidationError

__all__ = ["NumericalError", "ValidationError"]
