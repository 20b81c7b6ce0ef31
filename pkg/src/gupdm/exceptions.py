"""Exception hierarchy shared by every gupdm module."""


class GupdmError(Exception):
    """Base class for all errors raised by gupdm."""


class DimensionError(GupdmError, ValueError):
    """Tensor or image shapes are inconsistent."""


class NumericError(GupdmError, ArithmeticError):
    """A forward or backward pass produced NaN or Inf."""


class ContractError(GupdmError, RuntimeError):
    """An API precondition was violated (e.g. backward on a non-scalar)."""


class ConfigError(GupdmError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class EstimationError(GupdmError, ValueError):
    """A physical prior could not be estimated from the given inputs."""


class DecodeError(GupdmError, ValueError):
    """An image or checkpoint file could not be decoded."""


class DomainError(GupdmError, ValueError):
    """A value lies outside the domain an operation accepts."""
