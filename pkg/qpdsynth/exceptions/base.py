from typing import Any, Dict, Optional


class BaseError(Exception):
    """Root of every error raised by qpdsynth.

    ``details`` carries numeric diagnostics (residuals, eigenvalues, shapes)
    that the CLI writes to the session log.
    """

    def __init__(
        self,
        message: str,
        original_error: Optional[Exception] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        self.message = message
        self.original_error = original_error
        self.details = dict(details or {})
        super().__init__(self.message)

    def __str__(self) -> str:
        text = self.message
        if self.details:
            extra = ", ".join(f"{key}={value}" for key, value in self.details.items())
            text = f"{text} ({extra})"
        if self.original_error:
            return f"{text}: {str(self.original_error)}"
        return text
