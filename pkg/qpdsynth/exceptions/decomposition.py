from typing import Any, Dict, Optional

from .base import BaseError


class DecompositionError(BaseError):
    """Raised when a decomposition cannot be constructed."""
    pass


class RankBoundError(DecompositionError):
    """Raised when a channel's rank exceeds the dilation bound."""
    pass


class ConvergenceError(DecompositionError):
    """Raised when an iterative method stops without meeting its target.

    The best-effort result is attached so callers can still report it.
    """

    def __init__(
        self,
        message: str,
        result: Any = None,
        original_error: Optional[Exception] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(message, original_error, details)
        self.result = result


class TradeoffCurveError(DecompositionError):
    """Raised when a tradeoff sweep fails; carries the samples solved so far."""

    def __init__(
        self,
        message: str,
        partial: Any = None,
        original_error: Optional[Exception] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(message, original_error, details)
        self.partial = partial
