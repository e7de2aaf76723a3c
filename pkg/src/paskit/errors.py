"""Exception types shared across the package."""


class PaskitError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(PaskitError):
    """Tensor shapes do not line up for an operation."""


class NonFiniteError(PaskitError):
    """An operation produced NaN or infinity."""


class FrozenParameterError(PaskitError):
    """An update was attempted on a frozen parameter store."""


class FormatError(PaskitError):
    """A corpus, embedding or checkpoint file is malformed."""


class ConfigError(PaskitError):
    """A configuration value or key is invalid."""
