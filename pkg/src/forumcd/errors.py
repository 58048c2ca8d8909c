"""Exception types shared across the toolkit."""


class DataValidationError(ValueError):
    """Raised when input data or configuration violates a documented contract."""


class NumericalError(RuntimeError):
    """Raised when inference fails numerically (non-finite energy, ascent
    beyond tolerance, or every restart collapsing to an empty model)."""
