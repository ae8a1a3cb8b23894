from typing import Any, Dict, Optional

from .base import BaseError


class SolverError(BaseError):
    """Raised when a conic solve does not reach an optimal status."""

    def __init__(
        self,
        message: str,
        solution: Any = None,
        original_error: Optional[Exception] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(message, original_error, details)
        self.solution = solution


class InfeasibleError(SolverError):
    """Raised when a program is proven infeasible."""
    pass
