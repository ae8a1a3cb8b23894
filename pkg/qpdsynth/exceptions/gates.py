from .base import BaseError


class GateError(BaseError):
    """Raised for unknown gates or malformed gate specifications."""
    pass


class ConnectivityError(GateError):
    """Raised when a two-qubit gate acts on non-adjacent qubits."""
    pass
