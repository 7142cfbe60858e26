class ValidationError(ValueError):
    """Inputs or configuration violate a precondition; nothing was computed."""


class NumericalError(RuntimeError):
    """A computation diverged, lost mass, or otherwise became untrustworthy."""
