from .base import BaseError


class ConfigError(BaseError):
    """Raised when a run configuration file cannot be loaded or is invalid."""
    pass
