"""Quasiprobability decompositions: exact (LP) and γ-budgeted approximate (SDP)."""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt

from ..config.tolerances import DEFAULT_TOLERANCES, Tolerances
from ..exceptions.channel import DimensionMismatchError
from ..exceptions.solver import InfeasibleError, SolverError
from ..models.payloads import QpdPayload
from ..utils.logging import get_process_logger
from .channels import (
    ChoiMatrix,
    choi_from_json,
    choi_to_json,
    is_hermitian,
    linear_combination,
)
from .diamond import DiamondNormProgram, diamond_norm, output_trace_stack
from .solvers import (
    LinearProgram,
    PsdBlock,
    SemidefiniteProgram,
    SolverStatus,
    require_optimal,
    solve_lp,
    solve_sdp,
)

ChannelLike = Union[ChoiMatrix, Tuple[str, ChoiMatrix]]


@dataclass(frozen=True)
class QpdItem:
    label: str
    coefficient: float
    choi: ChoiMatrix = field(repr=False)


@dataclass(frozen=True)
class QuasiprobabilityDecomposition:
    """``target ≈ Σ a_i E_i`` with ``γ = Σ |a_i|``."""

    target: ChoiMatrix = field(repr=False)
    items: Tuple[QpdItem, ...]
    residual_diamond_error: float
    method: str = "exact"
    budget: Optional[float] = None

    @property
    def coefficients(self) -> npt.NDArray[np.float64]:
        return np.array([item.coefficient for item in self.items])

    @property
    def gamma(self) -> float:
        return float(np.sum(np.abs(self.coefficients)))

    def is_exact(self, tolerances: Tolerances = DEFAULT_TOLERANCES) -> bool:
        return self.residual_diamond_error <= tolerances.exact_residual

    def nonzero_items(self, cutoff: float = 1e-12) -> List[QpdItem]:
        return [item for item in self.items if abs(item.coefficient) > cutoff]

    def to_json(self, include_chois: bool = True) -> QpdPayload:
        payload: QpdPayload = {
            "gamma": self.gamma,
            "residual": self.residual_diamond_error,
            "method": self.method,
            "budget": self.budget,
            "items": [
                {"label": item.label, "a": item.coefficient, "choi_ref": f"choi/{index}"}
                for index, item in enumerate(self.items)
            ],
        }
        if include_chois:
            payload["target"] = choi_to_json(self.target)
            payload["chois"] = {f"choi/{i}": choi_to_json(item.choi) for i, item in enumerate(self.items)}
        return payload

    @classmethod
    def from_json(cls, data: QpdPayload) -> "QuasiprobabilityDecomposition":
        chois = data["chois"]
        items = tuple(
            QpdItem(entry["label"], float(entry["a"]), choi_from_json(chois[entry["choi_ref"]]))
            for entry in data["items"]
        )
        return cls(
            target=choi_from_json(data["target"]),
            items=items,
            residual_diamond_error=float(data["residual"]),
            method=data.get("method", "exact"),
            budget=data.get("budget"),
        )


def labelled_channels(channels: Sequence[ChannelLike]) -> List[Tuple[str, ChoiMatrix]]:
    labelled = []
    for index, entry in enumerate(channels):
        if isinstance(entry, ChoiMatrix):
            labelled.append((f"E{index}", entry))
        else:
            labelled.append((str(entry[0]), entry[1]))
    if not labelled:
        raise DimensionMismatchError("Decomposition set is empty")
    return labelled


def recombine(qpd: QuasiprobabilityDecomposition) -> ChoiMatrix:
    """``Σ a_i Λ_i`` over the decomposition's items."""
    return linear_combination(qpd.coefficients, [item.choi for item in qpd.items])


def hermitian_coordinates(matrix: np.ndarray) -> np.ndarray:
    """Independent real coordinates of Hermitian matrices (upper-triangle real parts, strict upper imaginary parts)."""
    d = matrix.shape[-1]
    rows, cols = np.triu_indices(d)
    strict_rows, strict_cols = np.triu_indices(d, k=1)
    return np.concatenate(
        [matrix[..., rows, cols].real, matrix[..., strict_rows, strict_cols].imag], axis=-1
    )


def trace_norm_bound(residual: ChoiMatrix) -> float:
    """``‖J‖₁`` of the unnormalized Choi matrix, an upper bound on the diamond norm."""
    eigenvalues = np.linalg.eigvalsh(0.5 * (residual.unnormalized + residual.unnormalized.conj().T))
    return float(np.sum(np.abs(eigenvalues)))


def residual_diamond_norm(
    residual: ChoiMatrix, threshold: float, tolerances: Tolerances = DEFAULT_TOLERANCES
) -> float:
    """Diamond norm of ``residual``; when ``trace_norm_bound`` is already below ``threshold`` the bound is returned."""
    bound = trace_norm_bound(residual)
    if bound < threshold:
        return bound
    return diamond_norm(residual, tolerances=tolerances)


def _check_set(target: ChoiMatrix, labelled: Sequence[Tuple[str, ChoiMatrix]], tolerances: Tolerances) -> None:
    if not is_hermitian(target.matrix, tolerances.hermitian):
        raise DimensionMismatchError("Target must be Hermitian preserving")
    for label, choi in labelled:
        if not choi.same_shape(target):
            raise DimensionMismatchError(f"Channel '{label}' does not match the target's dimensions")


def _polish(columns: np.ndarray, rhs: np.ndarray, coefficients: np.ndarray) -> np.ndarray:
    """Re-solve the equality on the LP's support by least squares when that lowers the residual."""
    support = np.flatnonzero(np.abs(coefficients) > 1e-12)
    if support.size == 0:
        return coefficients
    refined = coefficients.copy()
    refined[support] = np.linalg.lstsq(columns[:, support], rhs, rcond=None)[0]
    before = np.max(np.abs(columns @ coefficients - rhs))
    after = np.max(np.abs(columns @ refined - rhs))
    sign_kept = np.all(np.sign(refined[support]) == np.sign(coefficients[support]))
    return refined if after < before and sign_kept else coefficients


def exact_qpd(
    target: ChoiMatrix,
    channels: Sequence[ChannelLike],
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> QuasiprobabilityDecomposition:
    """Minimal-γ exact decomposition ``min Σ|a_i| s.t. Σ a_i Λ_i = Λ_target``.

    Solved as an LP over ``a = a⁺ − a⁻`` with ``a± ≥ 0``; the equality is imposed on
    the independent real coordinates of the Choi matrices.
    """
    labelled = labelled_channels(channels)
    _check_set(target, labelled, tolerances)
    k = len(labelled)
    columns = hermitian_coordinates(np.stack([choi.matrix for _, choi in labelled])).T
    rhs = hermitian_coordinates(target.matrix)

    program = LinearProgram(
        cost=np.ones(2 * k),
        A_eq=np.hstack([columns, -columns]),
        b_eq=rhs,
        bounds=(0.0, None),
    )
    solution = solve_lp(program, tolerances)
    if solution.status is SolverStatus.INFEASIBLE:
        raise InfeasibleError(
            "Target is not in the span of the decomposition set; use approximate_qpd",
            solution=solution,
            details={"set_size": k},
        )
    require_optimal(solution, "Exact QPD linear program")

    coefficients = _polish(columns, rhs, solution.x[:k] - solution.x[k:])
    items = tuple(QpdItem(label, float(a), choi) for (label, choi), a in zip(labelled, coefficients))
    qpd = QuasiprobabilityDecomposition(target, items, residual_diamond_error=0.0, method="exact")
    residual = residual_diamond_norm(target - recombine(qpd), tolerances.exact_residual, tolerances)
    get_process_logger().debug(f"Exact QPD over {k} channels: gamma={qpd.gamma:.12g}, residual={residual:.3g}")
    return QuasiprobabilityDecomposition(target, items, residual_diamond_error=residual, method="exact")


def approximate_qpd(
    target: ChoiMatrix,
    channels: Sequence[ChannelLike],
    gamma_budget: float,
    enforce_cp: bool = False,
    enforce_tp: bool = False,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> QuasiprobabilityDecomposition:
    """Minimize ``‖Λ_target − Σ a_i Λ_i‖⋄`` subject to ``Σ|a_i| ≤ γ_budget``.

    With ``enforce_cp`` the approximate map ``Σ a_i Λ_i`` is constrained PSD; with
    ``enforce_tp`` its output marginal must equal the target's.
    """
    if gamma_budget < 0:
        raise SolverError(f"γ budget must be nonnegative, got {gamma_budget}")
    labelled = labelled_channels(channels)
    _check_set(target, labelled, tolerances)
    k = len(labelled)
    d_in = target.d_in
    if gamma_budget == 0:
        items = tuple(QpdItem(label, 0.0, choi) for label, choi in labelled)
        residual = diamond_norm(target, tolerances=tolerances)
        return QuasiprobabilityDecomposition(target, items, residual, method="approximate", budget=0.0)
    unnormalized = np.stack([choi.unnormalized for _, choi in labelled])

    diamond = DiamondNormProgram(target.n_in, target.n_out, target.unnormalized, -unnormalized, symmetric=True)
    n = diamond.n_core + k
    bounds = slice(diamond.n_core, n)
    cost = diamond.cost(n_extra=k)
    blocks = diamond.blocks(n_extra=k)

    # |a_i| ≤ u_i and Σ u_i ≤ γ_budget
    G = np.zeros((2 * k + 1, n))
    G[:k, :k] = np.eye(k)
    G[:k, bounds] = -np.eye(k)
    G[k : 2 * k, :k] = -np.eye(k)
    G[k : 2 * k, bounds] = -np.eye(k)
    G[2 * k, bounds] = 1.0
    h = np.zeros(2 * k + 1)
    h[2 * k] = gamma_budget

    if enforce_cp:
        coefficients = np.zeros((n, target.matrix.shape[0], target.matrix.shape[0]), dtype=complex)
        coefficients[:k] = unnormalized
        blocks.append(PsdBlock.hermitian(np.zeros_like(target.matrix), coefficients))

    A_eq = b_eq = None
    if enforce_tp:
        marginals = output_trace_stack(np.stack([choi.matrix for _, choi in labelled]), d_in, target.d_out)
        A_eq = np.zeros((d_in * d_in, n))
        A_eq[:, :k] = hermitian_coordinates(marginals).T
        b_eq = hermitian_coordinates(target.output_marginal())

    program = SemidefiniteProgram(cost=cost, blocks=blocks, A_eq=A_eq, b_eq=b_eq, G_ub=G, h_ub=h)
    solution = require_optimal(solve_sdp(program, tolerances), "Approximate QPD SDP", tolerances.accept_inaccurate)

    coefficients_a = solution.x[:k].copy()
    gamma = float(np.sum(np.abs(coefficients_a)))
    rescaled = gamma > gamma_budget
    if rescaled:
        coefficients_a *= gamma_budget / gamma

    items = tuple(QpdItem(label, float(a), choi) for (label, choi), a in zip(labelled, coefficients_a))
    residual = max(0.0, float(solution.objective))
    if rescaled:
        # the SDP objective belongs to the unscaled coefficients
        residual = diamond_norm(target - linear_combination(coefficients_a, [choi for _, choi in labelled]), tolerances=tolerances)
    get_process_logger().debug(
        f"Approximate QPD over {k} channels: budget={gamma_budget:.6g}, "
        f"gamma={float(np.sum(np.abs(coefficients_a))):.6g}, residual={residual:.3g}, "
        f"cp={enforce_cp}, tp={enforce_tp}"
    )
    return QuasiprobabilityDecomposition(
        target, items, residual_diamond_error=residual, method="approximate", budget=float(gamma_budget)
    )


def optimal_gamma(
    target: ChoiMatrix, channels: Sequence[ChannelLike], tolerances: Tolerances = DEFAULT_TOLERANCES
) -> float:
    return exact_qpd(target, channels, tolerances).gamma
