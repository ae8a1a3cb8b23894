"""Splitting a total γ budget across the gates of a circuit.

With ``x_i = log γ_i`` the product constraint ``Π γ_i = γ_total`` becomes
``Σ x_i = log γ_total``; the summed, linearly interpolated tradeoff-curve errors
are minimized over that scaled simplex by projected gradient descent.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from ..exceptions.decomposition import TradeoffCurveError
from ..utils.logging import get_process_logger, log_notice_once
from ..utils.parallel import SERIAL, Parallelism
from .tradeoff import TradeoffCurve

ENDPOINT_TOLERANCE = 1e-6
DEFAULT_STARTS = 8


@dataclass(frozen=True)
class BudgetAllocation:
    gamma_total: float
    labels: Tuple[str, ...]
    budgets: Tuple[float, ...]
    errors: Tuple[float, ...]
    start: int = 0

    @property
    def objective(self) -> float:
        return float(sum(self.errors))

    @property
    def product(self) -> float:
        return float(np.prod(self.budgets))

    @property
    def constraint_residual(self) -> float:
        return abs(float(np.sum(np.log(self.budgets))) - math.log(self.gamma_total))


def curve_eval(curve: TradeoffCurve, gamma: float) -> float:
    """Piecewise-linear error at ``gamma``; flat beyond the last sample."""
    if gamma < curve.min_budget - 1e-12:
        raise TradeoffCurveError(
            f"Budget {gamma:.6g} lies below the curve's first sample {curve.min_budget:.6g}"
        )
    return float(np.interp(gamma, curve.budgets, curve.errors))


def gamma_opt(curve: TradeoffCurve) -> float:
    return curve.gamma_opt if curve.gamma_opt is not None else curve.max_budget


def project_simplex(x: npt.NDArray[np.float64], total: float) -> npt.NDArray[np.float64]:
    """Euclidean projection onto ``{x ≥ 0, Σ x = total}``."""
    if total <= 0:
        return np.zeros_like(x)
    ordered = np.sort(x)[::-1]
    cumulative = np.cumsum(ordered) - total
    index = np.arange(1, x.size + 1)
    rho = np.nonzero(ordered - cumulative / index > 0)[0][-1]
    theta = cumulative[rho] / (rho + 1)
    return np.maximum(x - theta, 0.0)


@dataclass(frozen=True, eq=False)
class _BudgetProblem:
    curves: Tuple[TradeoffCurve, ...]
    log_total: float

    def objective(self, x: npt.NDArray[np.float64]) -> float:
        return float(sum(curve_eval(curve, math.exp(xi)) for curve, xi in zip(self.curves, x)))

    def gradient(self, x: npt.NDArray[np.float64], h: float = 1e-7) -> npt.NDArray[np.float64]:
        grad = np.zeros_like(x)
        for i, (curve, xi) in enumerate(zip(self.curves, x)):
            lower = max(xi - h, 0.0)
            upper = xi + h
            grad[i] = (curve_eval(curve, math.exp(upper)) - curve_eval(curve, math.exp(lower))) / (upper - lower)
        return grad


def _descend(task: Tuple[_BudgetProblem, npt.NDArray[np.float64], int]) -> Tuple[float, npt.NDArray[np.float64]]:
    problem, x, max_iterations = task
    x = project_simplex(x, problem.log_total)
    value = problem.objective(x)
    step = problem.log_total
    for _ in range(max_iterations):
        if step < 1e-12:
            break
        candidate = project_simplex(x - step * problem.gradient(x), problem.log_total)
        candidate_value = problem.objective(candidate)
        if candidate_value < value - 1e-15:
            x, value = candidate, candidate_value
            step *= 1.5
        else:
            step *= 0.5
    return value, x


def _starts(n: int, log_total: float, count: int, seed: int) -> List[npt.NDArray[np.float64]]:
    """Uniform split, every single-gate corner, then random simplex points."""
    starts = [np.full(n, log_total / n)]
    starts.extend(log_total * np.eye(n)[i] for i in range(n))
    rng = np.random.default_rng(seed)
    while len(starts) < max(count, n + 1):
        starts.append(log_total * rng.dirichlet(np.ones(n)))
    return starts


def _allocation(
    curves: Sequence[TradeoffCurve], labels: Sequence[str], gamma_total: float, x: npt.NDArray[np.float64], start: int = 0
) -> BudgetAllocation:
    budgets = tuple(float(math.exp(xi)) for xi in x)
    errors = tuple(curve_eval(curve, b) for curve, b in zip(curves, budgets))
    return BudgetAllocation(gamma_total, tuple(labels), budgets, errors, start)


def optimize_budget(
    curves: Sequence[TradeoffCurve],
    gamma_total: float,
    labels: Optional[Sequence[str]] = None,
    starts: int = DEFAULT_STARTS,
    max_iterations: int = 500,
    seed: int = 0,
    parallelism: Parallelism = SERIAL,
) -> BudgetAllocation:
    """Minimize ``Σ ε_i(γ_i)`` subject to ``Π γ_i = γ_total`` and ``γ_i ≥ 1``.

    Totals at or above ``Π γ_opt,i`` correct every gate exactly; the excess is
    spread in proportion to ``log γ_opt,i``.
    """
    logger_base = get_process_logger()
    if not curves:
        raise TradeoffCurveError("Budget optimization needs at least one tradeoff curve")
    if gamma_total < 1.0:
        raise TradeoffCurveError(f"Total γ budget must be at least 1, got {gamma_total}")
    labels = list(labels) if labels is not None else [curve.label or f"gate{i}" for i, curve in enumerate(curves)]
    for curve, label in zip(curves, labels):
        if curve.min_budget > 1.0 + 1e-12:
            raise TradeoffCurveError(f"Curve '{label}' must start at γ = 1")
        endpoint = curve_eval(curve, gamma_opt(curve))
        if endpoint > ENDPOINT_TOLERANCE:
            raise TradeoffCurveError(f"Curve '{label}' does not reach zero error", details={"error": endpoint})

    n = len(curves)
    log_total = math.log(gamma_total)
    exact_logs = np.array([math.log(gamma_opt(curve)) for curve in curves])
    if log_total >= exact_logs.sum():
        weights = exact_logs / exact_logs.sum() if exact_logs.sum() > 0 else np.full(n, 1.0 / n)
        return _allocation(curves, labels, gamma_total, weights * log_total)

    problem = _BudgetProblem(tuple(curves), log_total)
    points = _starts(n, log_total, starts, seed)
    if all(np.allclose(curve.errors, curve.errors[0]) for curve in curves):
        log_notice_once("budget-flat", "Flat tradeoff curves: returning the uniform budget split")
        return _allocation(curves, labels, gamma_total, points[0])

    results = parallelism.map(_descend, [(problem, x0, max_iterations) for x0 in points])
    values = [value for value, _ in results]
    best = int(np.argmin(values))
    logger_base.debug(f"Budget γ_total={gamma_total:.6g}: start objectives={[f'{v:.3g}' for v in values]}, best={best}")
    return _allocation(curves, labels, gamma_total, results[best][1], best)


def budget_sweep(
    curves: Sequence[TradeoffCurve],
    totals: Sequence[float],
    labels: Optional[Sequence[str]] = None,
    seed: int = 0,
    parallelism: Parallelism = SERIAL,
) -> List[BudgetAllocation]:
    return [optimize_budget(curves, total, labels, seed=seed, parallelism=parallelism) for total in totals]


def allocation_table(allocations: Sequence[BudgetAllocation]) -> List[Dict[str, Any]]:
    """Rows ``gamma_total, gate_label, gamma_budget, error_contribution``."""
    return [
        {
            "gamma_total": allocation.gamma_total,
            "gate_label": label,
            "gamma_budget": budget,
            "error_contribution": error,
        }
        for allocation in allocations
        for label, budget, error in zip(allocation.labels, allocation.budgets, allocation.errors)
    ]
