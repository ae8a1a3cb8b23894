from .base import BaseError
from .channel import (
    ChannelError,
    DimensionMismatchError,
    KrausNormalizationError,
    NotHermitianError,
    NotPhysicalError,
    NotUnitaryError,
)
from .config import ConfigError
from .decomposition import (
    ConvergenceError,
    DecompositionError,
    RankBoundError,
    TradeoffCurveError,
)
from .gates import ConnectivityError, GateError
from .solver import InfeasibleError, SolverError

__all__ = [
    "BaseError",
    "ChannelError",
    "ConfigError",
    "ConnectivityError",
    "ConvergenceError",
    "DecompositionError",
    "DimensionMismatchError",
    "GateError",
    "InfeasibleError",
    "KrausNormalizationError",
    "NotHermitianError",
    "NotPhysicalError",
    "NotUnitaryError",
    "RankBoundError",
    "SolverError",
    "TradeoffCurveError",
]
