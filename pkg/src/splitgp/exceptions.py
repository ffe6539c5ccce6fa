"""Exception types shared across the package."""


class ContractViolationError(ValueError):
    """An argument violated a documented precondition (shape, emptiness, staleness)."""


class DegenerateDataError(ValueError):
    """Data carries no usable structure for the requested operation (e.g. all rows identical)."""


class NumericalError(RuntimeError):
    """A linear-algebra step failed beyond what jitter can repair."""


class EmptyModelError(RuntimeError):
    """Prediction was requested from a model that has never seen data."""
