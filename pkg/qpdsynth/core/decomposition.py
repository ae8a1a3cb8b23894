"""Signed decompositions of Hermitian-preserving maps into TPCP channels.

``two_channel_decomposition`` solves the convex problem ``Λ_F = P − N`` with
``P, N ⪰ 0`` and identity-proportional output marginals, minimizing
``γ = tr P + tr N``. ``rank_constrained_decomposition`` then splits ``P`` and
``N`` into ``n_pos + n_neg`` channels of Choi rank at most ``r`` through the
factorization ``Λ̃ = X†X`` with ``X`` of shape ``r × 4^n``.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import numpy.typing as npt
from scipy.optimize import Bounds, LinearConstraint, minimize

from ..config.tolerances import DEFAULT_TOLERANCES, Tolerances
from ..exceptions.base import BaseError
from ..exceptions.config import ConfigError
from ..exceptions.decomposition import DecompositionError
from ..utils.logging import get_process_logger, log_notice_once
from ..utils.parallel import SERIAL, Parallelism
from .channels import (
    ChoiMatrix,
    channel_rank,
    choi_to_json,
    enforce_trace_preservation,
    hermitian_part,
    identity_choi,
)
from .diamond import hermitian_basis, output_trace_stack
from .qpd import hermitian_coordinates
from .solvers import PsdBlock, SemidefiniteProgram, require_optimal, solve_sdp


@dataclass(frozen=True)
class WeightedChannel:
    weight: float
    choi: ChoiMatrix = field(repr=False)
    sign: int = 1
    rank: int = 0


@dataclass(frozen=True)
class ChannelDecomposition:
    """``Λ_F ≈ Σ a⁺_i Λ⁺_i − Σ a⁻_i Λ⁻_i`` with TPCP ``Λ±_i``."""

    target: ChoiMatrix = field(repr=False)
    positive: Tuple[WeightedChannel, ...]
    negative: Tuple[WeightedChannel, ...]
    residual: float
    method: str = "two_channel"
    converged: bool = True
    objective: float = 0.0
    restarts: int = 0

    @property
    def gamma(self) -> float:
        return float(sum(item.weight for item in self.positive) + sum(item.weight for item in self.negative))

    @property
    def items(self) -> List[WeightedChannel]:
        return list(self.positive) + list(self.negative)

    def nonzero(self, cutoff: float = 1e-9) -> List[WeightedChannel]:
        return [item for item in self.items if item.weight > cutoff]

    def reconstruct(self) -> ChoiMatrix:
        total = np.zeros_like(self.target.matrix)
        for item in self.items:
            total = total + item.sign * item.weight * item.choi.matrix
        return ChoiMatrix(self.target.n_in, self.target.n_out, total)

    def to_json(self, source_iteration: Optional[int] = None) -> Dict[str, Any]:
        return {
            "gamma": self.gamma,
            "residual": self.residual,
            "method": self.method,
            "converged": self.converged,
            "objective": self.objective,
            "items": [
                {
                    "a": item.weight,
                    "sign": item.sign,
                    "rank": item.rank,
                    "source_iteration": source_iteration,
                    "choi": choi_to_json(item.choi),
                }
                for item in self.items
            ],
        }


def marginal_scale(choi: ChoiMatrix, tolerances: Tolerances = DEFAULT_TOLERANCES) -> float:
    """``c`` such that ``tr₂ Λ = c 𝟙/2^n``; raises when the marginal is not proportional to the identity."""
    marginal = choi.output_marginal()
    scale = float(np.trace(marginal).real)
    deviation = float(np.linalg.norm(marginal - scale * np.eye(choi.d_in) / choi.d_in))
    if deviation > tolerances.tp * max(1.0, float(np.abs(choi.matrix).max())):
        raise DecompositionError(
            "Target's output marginal is not proportional to the identity",
            details={"deviation": deviation},
        )
    return scale


def _weighted(matrix: np.ndarray, choi_shape: ChoiMatrix, sign: int, tolerances: Tolerances) -> WeightedChannel:
    weight = float(np.trace(matrix).real)
    if weight <= tolerances.rank_cutoff:
        return WeightedChannel(0.0, identity_choi(choi_shape.n_in), sign, rank=1)
    choi = ChoiMatrix(choi_shape.n_in, choi_shape.n_out, hermitian_part(matrix) / weight)
    try:
        choi = enforce_trace_preservation(choi)
    except BaseError:
        return WeightedChannel(0.0, identity_choi(choi_shape.n_in), sign, rank=1)
    return WeightedChannel(weight, choi, sign, rank=channel_rank(choi, tolerances.rank_cutoff))


def two_channel_decomposition(
    target: ChoiMatrix, tolerances: Tolerances = DEFAULT_TOLERANCES
) -> ChannelDecomposition:
    """Minimal-γ split ``Λ_F = a⁺ Λ⁺ − a⁻ Λ⁻`` into two TPCP channels."""
    if target.n_in != target.n_out:
        raise DecompositionError("Channel decomposition expects maps with equal input and output size")
    marginal_scale(target, tolerances)
    d, d_in, d_out = target.matrix.shape[0], target.d_in, target.d_out
    basis = hermitian_basis(d)
    traced = output_trace_stack(basis, d_in, d_out)
    traces = np.real(np.trace(basis, axis1=1, axis2=2))

    # N = Σ x_k B_k; P = Λ_F + N
    A_eq = hermitian_coordinates(traced - traces[:, None, None] * np.eye(d_in) / d_in).T
    program = SemidefiniteProgram(
        cost=traces,
        blocks=[
            PsdBlock.hermitian(np.zeros((d, d), dtype=complex), basis),
            PsdBlock.hermitian(target.matrix, basis),
        ],
        A_eq=A_eq,
        b_eq=np.zeros(A_eq.shape[0]),
    )
    solution = require_optimal(solve_sdp(program, tolerances), "Two-channel decomposition SDP", tolerances.accept_inaccurate)
    negative = np.tensordot(solution.x, basis, axes=1)
    positive = target.matrix + negative

    decomposition = ChannelDecomposition(
        target=target,
        positive=(_weighted(positive, target, +1, tolerances),),
        negative=(_weighted(negative, target, -1, tolerances),),
        residual=0.0,
    )
    residual = float(np.linalg.norm(decomposition.reconstruct().matrix - target.matrix))
    get_process_logger().debug(f"Two-channel decomposition: gamma={decomposition.gamma:.12g}, residual={residual:.3g}")
    return replace(decomposition, residual=residual)


@dataclass(frozen=True)
class BMConfig:
    rank: int = 2
    n_pos: Optional[int] = None
    n_neg: Optional[int] = None
    epsilon: float = 0.2
    restarts: int = 5
    max_iterations: int = 1000
    method: str = "slsqp"
    perturbation: float = 0.05
    success_threshold: float = 1e-10

    def validate(self) -> None:
        if self.rank < 2:
            raise ConfigError(f"Rank bound must be at least 2, got {self.rank}")
        if self.epsilon < 0:
            raise ConfigError(f"Slack epsilon must be nonnegative, got {self.epsilon}")
        if self.restarts < 1 or self.max_iterations < 1:
            raise ConfigError("Restarts and max_iterations must be positive")
        if self.method not in ("slsqp", "trust-constr"):
            raise ConfigError(f"Unknown local solver '{self.method}'")
        for name in ("n_pos", "n_neg"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(f"{name} must be positive, got {value}")

    def counts(self, n_qubits: int) -> Tuple[int, int]:
        log_notice_once(
            "bm-counts",
            "Default channel counts are 2+2 for one-qubit and 8+8 for two-qubit targets",
        )
        default = 2 if n_qubits == 1 else 8
        return (self.n_pos or default, self.n_neg or default)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BMConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown decomposition keys: {sorted(unknown)}")
        config = cls(**data)
        config.validate()
        return config


@dataclass(frozen=True, eq=False)
class BMState:
    """Factors ``X_i`` (``r × 4^n``) and weights ``a_i`` with signs ``+1`` then ``−1``."""

    factors: npt.NDArray[np.complex128]
    weights: npt.NDArray[np.float64]
    signs: npt.NDArray[np.int64]

    def blocks(self) -> npt.NDArray[np.complex128]:
        """``Λ̃_i = X_i† X_i`` for every item."""
        return np.einsum("irj,irk->ijk", self.factors.conj(), self.factors)

    def pack(self) -> npt.NDArray[np.float64]:
        return np.concatenate([self.factors.real.reshape(-1), self.factors.imag.reshape(-1), self.weights])

    @classmethod
    def unpack(cls, x: npt.NDArray[np.float64], like: "BMState") -> "BMState":
        size = like.factors.size
        factors = (x[:size] + 1j * x[size : 2 * size]).reshape(like.factors.shape)
        return cls(factors, np.asarray(x[2 * size :], dtype=float), like.signs)


def _pairs(matrix: np.ndarray, count: int, rank: int) -> Tuple[np.ndarray, np.ndarray]:
    """Top ``rank·count`` eigenpairs of a PSD matrix grouped ``rank`` at a time into factors."""
    dim = matrix.shape[0]
    eigenvalues, eigenvectors = np.linalg.eigh(hermitian_part(matrix))
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    eigenvectors = eigenvectors[:, order]
    factors = np.zeros((count, rank, dim), dtype=complex)
    for i in range(count):
        for j in range(rank):
            column = i * rank + j
            if column < dim:
                # row j of X_i is (√λ u)†, so X†X = Σ λ u u†
                factors[i, j] = np.sqrt(eigenvalues[column]) * eigenvectors[:, column].conj()
    weights = np.real(np.einsum("irj,irj->i", factors.conj(), factors))
    return factors, weights


def bm_initialize(
    decomposition: ChannelDecomposition, n_pos: int, n_neg: int, rank: int = 2
) -> BMState:
    """Spectral-pairing initial guess from a two-channel decomposition.

    The eigenpairs of ``a⁺Λ⁺`` and ``a⁻Λ⁻`` are sorted nonincreasingly and grouped
    ``rank`` at a time; each group gives ``X_i`` with weight ``a_i = tr(X_i†X_i)``.
    Keeping every eigenpair reproduces ``Λ_F`` and ``γ`` exactly.
    """
    log_notice_once(
        "bm-init-weight",
        "Initial channel weights use tr(Y Y†) of each eigenvector group",
    )
    positive = sum(item.weight * item.choi.matrix for item in decomposition.positive)
    negative = sum(item.weight * item.choi.matrix for item in decomposition.negative)
    pos_factors, pos_weights = _pairs(np.asarray(positive), n_pos, rank)
    neg_factors, neg_weights = _pairs(np.asarray(negative), n_neg, rank)
    return BMState(
        factors=np.concatenate([pos_factors, neg_factors]),
        weights=np.concatenate([pos_weights, neg_weights]),
        signs=np.concatenate([np.ones(n_pos, dtype=int), -np.ones(n_neg, dtype=int)]),
    )


@dataclass(frozen=True, eq=False)
class BMObjective:
    """``‖Λ_F − Σ s_i Λ̃_i‖² + Σ ‖tr₂ Λ̃_i − a_i 𝟙/2^n‖²`` and its gradient."""

    target: npt.NDArray[np.complex128]
    d_in: int
    d_out: int
    like: BMState

    def parts(self, state: BMState) -> Tuple[float, float, np.ndarray, np.ndarray]:
        blocks = state.blocks()
        residual = self.target - np.tensordot(state.signs.astype(float), blocks, axes=1)
        marginals = output_trace_stack(blocks, self.d_in, self.d_out)
        deviations = marginals - state.weights[:, None, None] * np.eye(self.d_in) / self.d_in
        reconstruction = float(np.sum(np.abs(residual) ** 2))
        trace_term = float(np.sum(np.abs(deviations) ** 2))
        return reconstruction, trace_term, residual, deviations

    def value(self, x: np.ndarray) -> float:
        reconstruction, trace_term, _, _ = self.parts(BMState.unpack(x, self.like))
        return reconstruction + trace_term

    def gradient(self, x: np.ndarray) -> np.ndarray:
        state = BMState.unpack(x, self.like)
        _, _, residual, deviations = self.parts(state)
        lifted = np.einsum("nij,kl->nikjl", deviations, np.eye(self.d_out)).reshape(
            deviations.shape[0], self.d_in * self.d_out, self.d_in * self.d_out
        )
        kernel = -state.signs[:, None, None] * residual[None] + lifted
        grad_factors = 4.0 * np.einsum("irj,ijk->irk", state.factors, kernel)
        grad_weights = -2.0 * np.real(np.trace(deviations, axis1=1, axis2=2)) / self.d_in
        return np.concatenate([grad_factors.real.reshape(-1), grad_factors.imag.reshape(-1), grad_weights])


def _local_solve(task: Tuple[BMObjective, np.ndarray, float, BMConfig]) -> Tuple[float, np.ndarray]:
    objective, x0, epsilon, config = task
    n_weights = objective.like.weights.size
    n = x0.size
    lower = np.full(n, -np.inf)
    lower[n - n_weights :] = 0.0
    row = np.zeros(n)
    row[n - n_weights :] = 1.0

    if config.method == "trust-constr":
        result = minimize(
            objective.value,
            x0,
            jac=objective.gradient,
            method="trust-constr",
            bounds=Bounds(lower, np.full(n, np.inf)),
            constraints=[LinearConstraint(row[None, :], 1.0, 1.0 + epsilon)],
            options={"maxiter": config.max_iterations, "gtol": 1e-12, "xtol": 1e-14},
        )
    else:
        result = minimize(
            objective.value,
            x0,
            jac=objective.gradient,
            method="SLSQP",
            bounds=list(zip(lower, [None] * n)),
            constraints=[
                {"type": "ineq", "fun": lambda x: row @ x - 1.0, "jac": lambda x: row},
                {"type": "ineq", "fun": lambda x: 1.0 + epsilon - row @ x, "jac": lambda x: -row},
            ],
            options={"maxiter": config.max_iterations, "ftol": 1e-16},
        )
    return float(objective.value(result.x)), np.asarray(result.x)


def rank_constrained_decomposition(
    target: ChoiMatrix,
    config: BMConfig = BMConfig(),
    f_star: Optional[float] = None,
    seed: int = 0,
    parallelism: Parallelism = SERIAL,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    initial: Optional[ChannelDecomposition] = None,
) -> ChannelDecomposition:
    """Decompose ``target`` into channels of Choi rank ``≤ config.rank``.

    The problem is solved on ``Λ_F / f*`` so that the success threshold is relative;
    weights are scaled back afterwards. Restart 0 starts from :func:`bm_initialize`,
    the others from Gaussian perturbations of it. A result that misses the
    threshold is returned with ``converged=False``.
    """
    config.validate()
    logger_base = get_process_logger()
    if initial is None:
        initial = two_channel_decomposition(target, tolerances)
    if f_star is None:
        f_star = initial.gamma
    if f_star <= tolerances.rank_cutoff:
        zero = WeightedChannel(0.0, identity_choi(target.n_in), +1, rank=1)
        return ChannelDecomposition(target, (zero,), (replace(zero, sign=-1),), 0.0, method="rank_constrained")

    n_pos, n_neg = config.counts(target.n_in)
    start = bm_initialize(initial, n_pos, n_neg, config.rank)
    scaled = BMState(start.factors / np.sqrt(f_star), start.weights / f_star, start.signs)
    objective = BMObjective(target.matrix / f_star, target.d_in, target.d_out, scaled)

    x_init = scaled.pack()
    sigma = config.perturbation * float(np.linalg.norm(scaled.factors))
    rng = np.random.default_rng(seed)
    starts = [x_init]
    for _ in range(1, config.restarts):
        noise = np.zeros_like(x_init)
        noise[: 2 * scaled.factors.size] = rng.normal(0.0, sigma, 2 * scaled.factors.size)
        starts.append(x_init + noise)

    results = parallelism.map(_local_solve, [(objective, x0, config.epsilon, config) for x0 in starts])
    values = [value for value, _ in results]
    best = int(np.argmin(values))  # argmin keeps the lowest index on ties
    best_value, best_x = results[best]
    logger_base.debug(f"BM restarts: objectives={[f'{v:.3g}' for v in values]}, best={best}")

    state = BMState.unpack(best_x, scaled)
    blocks = state.blocks() * f_star
    items = [
        _weighted(block, target, int(sign), tolerances)
        for block, sign in zip(blocks, state.signs)
    ]
    decomposition = ChannelDecomposition(
        target=target,
        positive=tuple(item for item in items if item.sign > 0),
        negative=tuple(item for item in items if item.sign < 0),
        residual=0.0,
        method="rank_constrained",
        converged=best_value <= config.success_threshold,
        objective=best_value,
        restarts=config.restarts,
    )
    residual = float(np.linalg.norm(decomposition.reconstruct().matrix - target.matrix))
    if not decomposition.converged:
        logger_base.warning(
            f"Rank-constrained decomposition missed the threshold: objective={best_value:.3g} "
            f"after {config.restarts} restarts"
        )
    return replace(decomposition, residual=residual)

