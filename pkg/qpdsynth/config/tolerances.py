from dataclasses import dataclass, fields
from typing import Any, Dict

from click import BadParameter


@dataclass(frozen=True)
class Tolerances:
    """Every numeric tolerance used by the library, in one place.

    Choi matrices use the trace-1 normalization; multiply by ``2**n_in`` to
    move to the unnormalized convention used inside the diamond-norm programs.
    """

    hermitian: float = 1e-10
    unitary: float = 1e-9
    density: float = 1e-9
    kraus: float = 1e-9
    rank_cutoff: float = 1e-8
    cp: float = 1e-7
    tp: float = 1e-6
    feasibility: float = 1e-8
    duality_gap: float = 1e-7
    # a stalled interior-point run below these is reported INACCURATE, not OPTIMAL
    acceptable_feasibility: float = 1e-6
    acceptable_gap: float = 1e-6
    exact_residual: float = 1e-7
    monotonicity: float = 1e-6
    solver_max_iterations: int = 200
    # opt in to INACCURATE solver runs for diamond norms, QPDs and decompositions
    accept_inaccurate: bool = False

    def validate(self) -> None:
        for item in fields(self):
            value = getattr(self, item.name)
            if isinstance(value, bool):
                continue
            if value <= 0:
                raise BadParameter(
                    message=f"Tolerance '{item.name}' must be positive, got {value}.",
                    param_hint=f"'tolerances.{item.name}'",
                )

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Tolerances":
        known = {item.name for item in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise BadParameter(
                message=f"Unknown tolerance keys: {sorted(unknown)}.",
                param_hint="'tolerances'",
            )
        tolerances = cls(**data)
        tolerances.validate()
        return tolerances


DEFAULT_TOLERANCES = Tolerances()
