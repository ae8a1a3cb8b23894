from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from ..config.tolerances import DEFAULT_TOLERANCES, Tolerances
from ..exceptions.base import BaseError
from ..exceptions.decomposition import TradeoffCurveError
from ..utils.logging import get_process_logger
from ..utils.parallel import SERIAL, Parallelism
from .channels import ChoiMatrix
from .qpd import ChannelLike, approximate_qpd, exact_qpd, labelled_channels

DEFAULT_GRID_POINTS = 21
GRID_HEADROOM = 1.05


@dataclass(frozen=True, eq=False)
class TradeoffCurve:
    """Optimal diamond error as a function of the γ budget, linearly interpolated."""

    budgets: npt.NDArray[np.float64]
    errors: npt.NDArray[np.float64]
    label: str = ""
    gamma_opt: Optional[float] = None
    enforce_cp: bool = False
    enforce_tp: bool = False
    complete: bool = True
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        budgets = np.asarray(self.budgets, dtype=float)
        errors = np.asarray(self.errors, dtype=float)
        if budgets.shape != errors.shape or budgets.ndim != 1 or budgets.size == 0:
            raise TradeoffCurveError("Tradeoff curve needs matching, nonempty budget and error arrays")
        order = np.argsort(budgets, kind="stable")
        object.__setattr__(self, "budgets", budgets[order])
        object.__setattr__(self, "errors", errors[order])

    @property
    def min_budget(self) -> float:
        return float(self.budgets[0])

    @property
    def max_budget(self) -> float:
        return float(self.budgets[-1])

    def monotonicity_violation(self) -> float:
        if self.errors.size < 2:
            return 0.0
        return float(max(0.0, np.max(np.diff(self.errors))))

    def convexity_violation(self) -> float:
        """Largest amount by which a sample lies above the chord of its neighbours."""
        worst = 0.0
        for i in range(1, self.budgets.size - 1):
            x0, x1, x2 = self.budgets[i - 1 : i + 2]
            y0, y1, y2 = self.errors[i - 1 : i + 2]
            chord = y0 + (y2 - y0) * (x1 - x0) / (x2 - x0)
            worst = max(worst, float(y1 - chord))
        return worst

    def rows(self) -> List[Tuple[float, float]]:
        return [(float(b), float(e)) for b, e in zip(self.budgets, self.errors)]


def default_budget_grid(gamma_opt: float, points: int = DEFAULT_GRID_POINTS) -> npt.NDArray[np.float64]:
    """Geometric grid on ``[1, 1.05·γ_opt]`` that always contains ``γ_opt`` itself."""
    upper = max(GRID_HEADROOM * gamma_opt, 1.0 + 1e-6)
    grid = np.geomspace(1.0, upper, points - 1)
    return np.unique(np.append(grid, max(gamma_opt, 1.0)))


def _solve_point(task: Tuple[ChoiMatrix, List[Tuple[str, ChoiMatrix]], float, bool, bool, Tolerances]) -> Tuple[float, Optional[float], str]:
    target, channels, budget, enforce_cp, enforce_tp, tolerances = task
    try:
        qpd = approximate_qpd(target, channels, budget, enforce_cp, enforce_tp, tolerances)
    except BaseError as e:
        return budget, None, str(e)
    return budget, qpd.residual_diamond_error, ""


def tradeoff_curve(
    target: ChoiMatrix,
    channels: Sequence[ChannelLike],
    budgets: Optional[Sequence[float]] = None,
    enforce_cp: bool = False,
    enforce_tp: bool = False,
    label: str = "",
    parallelism: Parallelism = SERIAL,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> TradeoffCurve:
    """One approximate-QPD solve per budget; results are merged in budget order.

    Raises :class:`TradeoffCurveError` carrying the solved samples when any point
    fails, or when the curve increases by more than the monotonicity tolerance.
    """
    logger_base = get_process_logger()
    labelled = labelled_channels(channels)
    gamma_opt = None
    try:
        gamma_opt = exact_qpd(target, labelled, tolerances).gamma
    except BaseError as e:
        logger_base.info(f"No exact QPD for tradeoff target '{label}': {e}")

    if budgets is None:
        if gamma_opt is None:
            raise TradeoffCurveError("A budget grid is required when the target has no exact QPD")
        grid = default_budget_grid(gamma_opt)
    else:
        grid = np.asarray(sorted(float(b) for b in budgets))
        if grid.size == 0 or grid[0] < 0:
            raise TradeoffCurveError("Budgets must be a nonempty list of nonnegative values")

    logger_base.info(f"Tradeoff curve '{label}': {grid.size} budgets, {len(labelled)} channels, cp={enforce_cp}, tp={enforce_tp}")
    tasks = [(target, labelled, float(b), enforce_cp, enforce_tp, tolerances) for b in grid]
    results = parallelism.map(_solve_point, tasks)

    solved = [(b, e) for b, e, _ in results if e is not None]
    failures = [(b, message) for b, e, message in results if e is None]
    meta = {"gamma_opt": gamma_opt}
    if failures:
        partial = (
            TradeoffCurve(np.array([b for b, _ in solved]), np.array([e for _, e in solved]), label, gamma_opt, enforce_cp, enforce_tp, complete=False)
            if solved
            else None
        )
        raise TradeoffCurveError(
            f"{len(failures)} of {grid.size} tradeoff points failed",
            partial=partial,
            details={"first_failure_budget": failures[0][0], "reason": failures[0][1]},
        )

    curve = TradeoffCurve(grid, np.array([e for _, e in solved]), label, gamma_opt, enforce_cp, enforce_tp, metadata=meta)
    violation = curve.monotonicity_violation()
    if violation > tolerances.monotonicity:
        raise TradeoffCurveError(
            "Tradeoff curve is not nonincreasing in the budget",
            partial=curve,
            details={"violation": violation},
        )
    convexity = curve.convexity_violation()
    if convexity > tolerances.monotonicity:
        logger_base.warning(f"Tradeoff curve '{label}' deviates from convexity by {convexity:.3g}")
    return curve
