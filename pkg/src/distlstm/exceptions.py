"""Exception classes raised across the package."""


class DimensionError(ValueError):
    """Array shapes do not agree with the configured (n, p)."""


class NonFiniteError(ValueError):
    """An input that must be finite contains NaN or Inf."""


class CovarianceError(ArithmeticError):
    """A covariance matrix or innovation variance lost positivity."""


class DegenerateLikelihoodError(ArithmeticError):
    """Every particle received zero likelihood (model/data mismatch)."""


class EmptyNodeError(RuntimeError):
    """A node holds no particles, so its estimate is undefined."""


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""
