from .base import BaseError


class ChannelError(BaseError):
    """Base class for errors raised by the channel algebra."""


class DimensionMismatchError(ChannelError):
    """Raised when operands have incompatible dimensions."""
    pass


class NotUnitaryError(ChannelError):
    """Raised when a matrix expected to be unitary is not."""
    pass


class NotHermitianError(ChannelError):
    """Raised when a matrix expected to be Hermitian is not."""
    pass


class KrausNormalizationError(ChannelError):
    """Raised when a Kraus set increases the trace."""
    pass


class NotPhysicalError(ChannelError):
    """Raised when a map is required to be completely positive (or TP) and is not."""
    pass
