"""Stinespring dilations and their variational circuit approximation."""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from scipy.linalg import null_space
from scipy.optimize import minimize
from scipy.stats import unitary_group

from ..config.tolerances import DEFAULT_TOLERANCES, Tolerances
from ..exceptions.base import BaseError
from ..exceptions.channel import DimensionMismatchError, NotPhysicalError
from ..exceptions.decomposition import RankBoundError
from ..utils.logging import get_process_logger
from ..utils.parallel import SERIAL, Parallelism
from .channels import (
    PAULI_Y,
    PAULI_Z,
    ChoiMatrix,
    ComplexMatrix,
    channel_rank,
    choi_from_kraus,
    is_tpcp,
    kraus_from_choi,
    qubit_count,
)
from .diamond import diamond_distance
from .gates import Circuit, GateSpec, embed_operator, gate_unitary
from .noise import NoiseOracle


@dataclass(frozen=True, eq=False)
class DilationResult:
    """Isometry ``V`` (ancilla on the high qubits) and a unitary ``U`` whose first columns are ``V``."""

    isometry: ComplexMatrix
    unitary: ComplexMatrix
    n_ancilla: int

    @property
    def n_data(self) -> int:
        return qubit_count(self.isometry.shape[1])

    @property
    def n_qubits(self) -> int:
        return self.n_data + self.n_ancilla


def isometry_channel(isometry: ComplexMatrix) -> ChoiMatrix:
    """Channel ``ρ ↦ tr_R[V ρ V†]`` with the ancilla register on the high qubits."""
    d = isometry.shape[1]
    if isometry.shape[0] % d:
        raise DimensionMismatchError(f"Isometry of shape {isometry.shape} has no ancilla factor")
    blocks = np.asarray(isometry).reshape(isometry.shape[0] // d, d, d)
    return choi_from_kraus(list(blocks))


def stinespring_isometry(
    choi: ChoiMatrix, rank_bound: Optional[int] = None, tolerances: Tolerances = DEFAULT_TOLERANCES
) -> DilationResult:
    """Build ``V = Σ_k |k⟩_R ⊗ K_k`` from the Kraus operators of ``choi`` and complete it to a unitary."""
    verdict = is_tpcp(choi, tolerances)
    if not verdict.is_cp:
        raise NotPhysicalError("Dilation requires a completely positive map", details={"min_eigenvalue": verdict.min_eigenvalue})
    if not verdict.is_tp:
        raise NotPhysicalError("Dilation requires a trace-preserving map", details={"tp_deviation": verdict.tp_deviation})
    rank = channel_rank(choi, tolerances.rank_cutoff)
    if rank_bound is not None and rank > rank_bound:
        raise RankBoundError(f"Channel rank {rank} exceeds the bound {rank_bound}", details={"rank": rank})

    kraus = kraus_from_choi(choi, tolerances.rank_cutoff)
    n_ancilla = math.ceil(math.log2(len(kraus))) if len(kraus) > 1 else 0
    d = choi.d_in
    isometry = np.zeros((2**n_ancilla * d, d), dtype=complex)
    for k, operator in enumerate(kraus):
        isometry[k * d : (k + 1) * d] = operator

    gram_error = float(np.linalg.norm(isometry.conj().T @ isometry - np.eye(d)))
    if gram_error > tolerances.unitary * 10 * d:
        raise NotPhysicalError("Kraus operators do not form an isometry", details={"gram_error": gram_error})
    reproduced = float(np.linalg.norm(isometry_channel(isometry).matrix - choi.matrix))
    if reproduced > 1e-8:
        raise NotPhysicalError("Dilation does not reproduce the channel", details={"error": reproduced})

    complement = null_space(isometry.conj().T)
    unitary = np.hstack([isometry, complement])
    get_process_logger().debug(f"Stinespring dilation: rank={rank}, ancillas={n_ancilla}")
    return DilationResult(isometry, unitary, n_ancilla)


@dataclass(frozen=True)
class VariationalForm:
    """RyRz ansatz: a rotation layer, then ``depth`` rounds of a CNOT ladder and another rotation layer.

    Parameter ``2·n·l + 2q`` is the Ry angle of qubit ``q`` in rotation layer ``l``;
    the Rz angle follows it. The ladder is ``CNOT(q → q+1)`` for ``q = 0 … n−2``.
    """

    n_qubits: int
    depth: int
    n_data: Optional[int] = None

    def __post_init__(self) -> None:
        if self.n_data is None:
            object.__setattr__(self, "n_data", self.n_qubits)
        if self.depth < 0:
            raise DimensionMismatchError(f"Variational depth must be nonnegative, got {self.depth}")

    @property
    def n_parameters(self) -> int:
        return 2 * self.n_qubits * (self.depth + 1)

    @property
    def n_cnots(self) -> int:
        return (self.n_qubits - 1) * self.depth

    def _gates(self, theta: Sequence[float]) -> List[GateSpec]:
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.n_parameters:
            raise DimensionMismatchError(f"Expected {self.n_parameters} parameters, got {theta.size}")
        gates: List[GateSpec] = []
        for layer in range(self.depth + 1):
            if layer > 0:
                gates.extend(GateSpec("CNOT", (q, q + 1)) for q in range(self.n_qubits - 1))
            base = 2 * self.n_qubits * layer
            for q in range(self.n_qubits):
                gates.append(GateSpec("RY", (q,), float(theta[base + 2 * q])))
                gates.append(GateSpec("RZ", (q,), float(theta[base + 2 * q + 1])))
        return gates

    def circuit(self, theta: Sequence[float]) -> Circuit:
        return Circuit(self.n_qubits, tuple(self._gates(theta)), self.n_data)

    def unitary(self, theta: Sequence[float]) -> ComplexMatrix:
        return self.circuit(theta).unitary()

    def isometry(self, theta: Sequence[float]) -> ComplexMatrix:
        """Columns of ``U_Var(θ)`` with every ancilla input in ``|0⟩``."""
        return self.unitary(theta)[:, : 2**self.n_data]

    def unitary_with_derivatives(self, theta: Sequence[float]) -> Tuple[ComplexMatrix, npt.NDArray[np.complex128]]:
        """``U(θ)`` and ``∂U/∂θ_k`` for every parameter, via prefix/suffix products."""
        gates = self._gates(theta)
        dim = 2**self.n_qubits
        matrices = [embed_operator(gate_unitary(g), g.qubits, self.n_qubits) for g in gates]
        prefix = [np.eye(dim, dtype=complex)]
        for matrix in matrices:
            prefix.append(matrix @ prefix[-1])
        # suffix[j] is the product of gates j, j+1, ... (last gate leftmost)
        suffix = [np.eye(dim, dtype=complex)] * (len(matrices) + 1)
        for j in range(len(matrices) - 1, -1, -1):
            suffix[j] = suffix[j + 1] @ matrices[j]
        generators = {"RY": PAULI_Y, "RZ": PAULI_Z}

        derivatives = np.zeros((self.n_parameters, dim, dim), dtype=complex)
        k = 0
        for j, gate in enumerate(gates):
            if gate.name not in generators:
                continue
            generator = embed_operator(generators[gate.name], gate.qubits, self.n_qubits)
            # d/dθ exp(−iθP/2) = −(i/2) P exp(−iθP/2)
            derivatives[k] = -0.5j * suffix[j + 1] @ generator @ prefix[j + 1]
            k += 1
        return prefix[-1], derivatives


def fit_objective(
    theta: Sequence[float],
    isometry: ComplexMatrix,
    form: VariationalForm,
    phase_optimized: bool = False,
) -> Tuple[float, npt.NDArray[np.float64]]:
    """``‖V − V_Var(θ)‖_F`` (optionally minimized over a global phase) and its gradient."""
    d = isometry.shape[1]
    unitary, derivatives = form.unitary_with_derivatives(theta)
    fitted = unitary[:, :d]
    d_fitted = derivatives[:, :, :d]
    overlap = np.vdot(isometry, fitted)
    overlaps = np.einsum("ij,kij->k", isometry.conj(), d_fitted)

    if phase_optimized:
        magnitude = abs(overlap)
        phase = overlap.conjugate() / magnitude if magnitude > 0 else 1.0
        value = float(np.linalg.norm(isometry - phase * fitted))
        d_squared = -2.0 * np.real(np.conj(overlap) * overlaps) / magnitude if magnitude > 0 else np.zeros(overlaps.size)
    else:
        value = float(np.linalg.norm(isometry - fitted))
        d_squared = -2.0 * np.real(overlaps)
    if value < 1e-15:
        return value, np.zeros(overlaps.size)
    return value, d_squared / (2.0 * value)


@dataclass(frozen=True, eq=False)
class FitResult:
    form: VariationalForm
    theta: npt.NDArray[np.float64]
    objective: float
    restart_objectives: Tuple[float, ...]
    channel: Optional[ChoiMatrix] = field(default=None, repr=False)

    def circuit(self) -> Circuit:
        return self.form.circuit(self.theta)


def _fit_restart(task: Tuple[ComplexMatrix, VariationalForm, npt.NDArray[np.float64], bool, int]) -> Tuple[float, npt.NDArray[np.float64]]:
    isometry, form, theta0, phase_optimized, max_iterations = task
    result = minimize(
        fit_objective,
        theta0,
        args=(isometry, form, phase_optimized),
        jac=True,
        method="BFGS",
        options={"maxiter": max_iterations, "gtol": 1e-9},
    )
    value, _ = fit_objective(result.x, isometry, form, phase_optimized)
    return value, np.asarray(result.x)


def variational_fit(
    isometry: ComplexMatrix,
    depth: int,
    restarts: int = 5,
    seed: int = 0,
    phase_optimized: bool = False,
    max_iterations: int = 500,
    oracle: Optional[NoiseOracle] = None,
    parallelism: Parallelism = SERIAL,
) -> FitResult:
    """Best-of-``restarts`` BFGS fit of the RyRz ansatz to ``isometry``.

    Restart ``i`` starts from angles drawn uniformly in ``[0, 2π)`` by a generator
    seeded with ``(seed, depth, i)``; with ``oracle`` the fitted circuit is also realized.
    """
    isometry = np.asarray(isometry, dtype=complex)
    n_qubits = qubit_count(isometry.shape[0])
    n_data = qubit_count(isometry.shape[1])
    form = VariationalForm(n_qubits, depth, n_data)
    starts = [
        np.random.default_rng([seed, depth, restart]).uniform(0.0, 2 * np.pi, form.n_parameters)
        for restart in range(restarts)
    ]
    results = parallelism.map(_fit_restart, [(isometry, form, theta0, phase_optimized, max_iterations) for theta0 in starts])
    objectives = tuple(value for value, _ in results)
    best = int(np.argmin(objectives))
    get_process_logger().debug(
        f"Variational fit depth={depth}: restart objectives={[f'{v:.3g}' for v in objectives]}, best={best}"
    )
    theta = results[best][1]
    channel = oracle(form.circuit(theta)) if oracle is not None else None
    return FitResult(form, theta, objectives[best], objectives, channel)


@dataclass(frozen=True)
class DepthSweepRow:
    depth: int
    fit_objective: float
    diamond_error: float
    error: str = ""


def sweep_depth(
    isometry: ComplexMatrix,
    depths: Sequence[int],
    oracle: NoiseOracle,
    target: Optional[ChoiMatrix] = None,
    restarts: int = 5,
    seed: int = 0,
    parallelism: Parallelism = SERIAL,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> List[DepthSweepRow]:
    """Fit each depth, realize the circuit through ``oracle`` and measure its diamond error.

    ``target`` defaults to the channel induced by ``isometry``. A failing row is
    reported with NaN values and the error message; the sweep continues.
    """
    logger_base = get_process_logger()
    if target is None:
        target = isometry_channel(isometry)
    rows = []
    for depth in depths:
        try:
            fit = variational_fit(isometry, depth, restarts, seed, oracle=oracle, parallelism=parallelism)
            error = diamond_distance(fit.channel, target, tolerances=tolerances)
            rows.append(DepthSweepRow(depth, fit.objective, error))
            logger_base.info(f"Depth {depth}: fit objective {fit.objective:.3g}, diamond error {error:.3g}")
        except BaseError as e:
            logger_base.error(f"Depth {depth} failed: {e}")
            rows.append(DepthSweepRow(depth, float("nan"), float("nan"), str(e)))
    return rows


def best_depth(rows: Sequence[DepthSweepRow]) -> Optional[int]:
    finite = [row for row in rows if np.isfinite(row.diamond_error)]
    if not finite:
        return None
    return min(finite, key=lambda row: (row.diamond_error, row.depth)).depth


def sweep_rows(rows: Sequence[DepthSweepRow]) -> List[Dict[str, Any]]:
    return [{"m": row.depth, "fit_objective": row.fit_objective, "diamond_error": row.diamond_error} for row in rows]


def haar_unitary(dim: int, seed: int = 0) -> ComplexMatrix:
    return unitary_group.rvs(dim, random_state=np.random.default_rng(seed))
