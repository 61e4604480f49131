"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration or mismatched problem dimensions."""


class InvalidCovarianceError(ValueError):
    """A covariance matrix is not Hermitian positive semidefinite."""


class NumericalBreakdown(RuntimeError):
    """A solver could not make progress (bracket failure, singular system, ...)."""
