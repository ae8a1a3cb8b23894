"""Quasiprobability Monte Carlo estimation of expectation values.

Each shot draws one channel per gate with probability ``|a_i|/γ_k``, evolves
the density matrix exactly and reports ``sgn · Πγ_k`` times either
``tr[O ρ]`` (expectation mode) or a sampled eigenvalue of ``O`` (outcome mode).
Postselection failures, read off the trace deficit of the evolved state, give 0.
"""

import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt

from ..config.tolerances import DEFAULT_TOLERANCES
from ..exceptions.channel import DimensionMismatchError, NotHermitianError
from ..exceptions.decomposition import DecompositionError
from ..models.payloads import EstimatePayload
from ..utils.logging import get_process_logger
from ..utils.parallel import SERIAL, Parallelism
from .channels import ComplexMatrix, DensityMatrix, apply_channel, as_matrix, hermitian_part, is_hermitian
from .qpd import QuasiprobabilityDecomposition

BATCH_SIZE = 10_000


class OutputMode(str, Enum):
    EXPECTATION = "expectation"
    OUTCOME = "outcome"


@dataclass(frozen=True, eq=False)
class ObservableSpec:
    matrix: ComplexMatrix

    def __post_init__(self) -> None:
        matrix = as_matrix(self.matrix)
        if not is_hermitian(matrix, DEFAULT_TOLERANCES.hermitian):
            raise NotHermitianError("Observable must be Hermitian")
        object.__setattr__(self, "matrix", hermitian_part(matrix))

    @cached_property
    def spectrum(self) -> Tuple[npt.NDArray[np.float64], ComplexMatrix]:
        return np.linalg.eigh(self.matrix)

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.spectrum[0])))

    def expectation(self, rho: ComplexMatrix) -> float:
        return float(np.real(np.trace(self.matrix @ rho)))

    def outcome_probabilities(self, rho: ComplexMatrix) -> npt.NDArray[np.float64]:
        _, vectors = self.spectrum
        probabilities = np.real(np.einsum("ik,ij,jk->k", vectors.conj(), rho, vectors))
        probabilities = np.clip(probabilities, 0.0, None)
        return probabilities / probabilities.sum()


@dataclass(frozen=True)
class GateQpdAssignment:
    """One QPD per gate, applied in order to the whole data register."""

    qpds: Tuple[QuasiprobabilityDecomposition, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "qpds", tuple(self.qpds))
        if not self.qpds:
            raise DecompositionError("A circuit needs at least one gate QPD")
        for qpd in self.qpds:
            if qpd.gamma <= 0:
                raise DecompositionError("Every gate QPD needs a nonzero coefficient")

    @property
    def gammas(self) -> List[float]:
        return [qpd.gamma for qpd in self.qpds]

    @property
    def gamma_total(self) -> float:
        return float(np.prod(self.gammas))

    def probabilities(self, gate: int) -> npt.NDArray[np.float64]:
        coefficients = np.abs(self.qpds[gate].coefficients)
        return coefficients / coefficients.sum()

    def signs(self, gate: int) -> npt.NDArray[np.float64]:
        return np.sign(self.qpds[gate].coefficients)


@dataclass(frozen=True)
class EstimateReport:
    shots: int
    mean: float
    stderr: float
    abort_fraction: float
    gamma_total: float
    seed: int
    mode: str = OutputMode.EXPECTATION.value

    @property
    def variance(self) -> float:
        return self.stderr**2 * self.shots

    def to_json(self) -> EstimatePayload:
        return {
            "shots": self.shots,
            "mean": self.mean,
            "stderr": self.stderr,
            "abort_frac": self.abort_fraction,
            "gamma_total": self.gamma_total,
            "seed": self.seed,
            "mode": self.mode,
        }

    def row(self) -> Dict[str, Any]:
        return {key: value for key, value in self.to_json().items() if key != "mode"}


@dataclass
class _Moments:
    """Running count, mean and sum of squared deviations (Chan/Welford merge)."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    aborts: int = 0

    def merge(self, other: "_Moments") -> "_Moments":
        total = self.count + other.count
        if total == 0:
            return _Moments()
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / total
        m2 = self.m2 + other.m2 + delta**2 * self.count * other.count / total
        return _Moments(total, mean, m2, self.aborts + other.aborts)


def batch_generator(seed: int, batch: int) -> np.random.Generator:
    """Philox stream for ``batch``; independent of how batches are spread over workers."""
    return np.random.Generator(np.random.Philox(seed).jumped(batch))


@dataclass(frozen=True, eq=False)
class _BatchTask:
    rho: ComplexMatrix
    assignment: GateQpdAssignment
    observable: ObservableSpec
    mode: OutputMode
    seed: int
    batch: int
    size: int

    def final_state(self, indices: Sequence[int]) -> ComplexMatrix:
        """Unnormalized state after the sampled channels; its trace is the survival probability."""
        rho = self.rho
        for qpd, index in zip(self.assignment.qpds, indices):
            rho = apply_channel(qpd.items[int(index)].choi, rho)
        return rho


def _run_batch(task: _BatchTask) -> _Moments:
    rng = batch_generator(task.seed, task.batch)
    assignment = task.assignment
    n_gates = len(assignment.qpds)
    draws = np.stack(
        [rng.choice(len(qpd.items), size=task.size, p=assignment.probabilities(k)) for k, qpd in enumerate(assignment.qpds)],
        axis=1,
    )
    weights = assignment.gamma_total * np.prod(
        np.stack([assignment.signs(k)[draws[:, k]] for k in range(n_gates)]), axis=0
    )
    uniforms = rng.random(task.size)

    # shots sharing an index tuple share their final state
    combos, inverse = np.unique(draws, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    states = [task.final_state(combo) for combo in combos]
    survival = np.array([min(1.0, max(0.0, float(np.real(np.trace(rho))))) for rho in states])
    alive = uniforms < survival[inverse]

    outputs = np.zeros(task.size)
    if task.mode is OutputMode.EXPECTATION:
        values = np.array(
            [task.observable.expectation(rho / s) if s > 0 else 0.0 for rho, s in zip(states, survival)]
        )
        outputs[alive] = weights[alive] * values[inverse[alive]]
    else:
        eigenvalues, _ = task.observable.spectrum
        for index, (rho, s) in enumerate(zip(states, survival)):
            shots = np.flatnonzero(alive & (inverse == index))
            if shots.size == 0:
                continue
            probabilities = task.observable.outcome_probabilities(rho / s)
            outputs[shots] = weights[shots] * rng.choice(eigenvalues, size=shots.size, p=probabilities)

    mean = float(outputs.mean())
    return _Moments(task.size, mean, float(np.sum((outputs - mean) ** 2)), int(task.size - alive.sum()))


def sample_circuit(
    rho: DensityMatrix,
    assignment: GateQpdAssignment,
    observable: ObservableSpec,
    shots: int,
    seed: int = 0,
    mode: OutputMode = OutputMode.EXPECTATION,
    parallelism: Parallelism = SERIAL,
) -> EstimateReport:
    """Unbiased estimate of ``tr[O · F_m ∘ … ∘ F_1(ρ)]`` from ``shots`` QPD samples."""
    if shots < 1:
        raise DecompositionError(f"At least one shot is required, got {shots}")
    dim = rho.dim
    if observable.matrix.shape != (dim, dim):
        raise DimensionMismatchError("Observable does not act on the state's register")
    for qpd in assignment.qpds:
        if any(item.choi.d_in != dim or item.choi.d_out != dim for item in qpd.items):
            raise DimensionMismatchError("Every QPD channel must act on the full data register")

    sizes = [BATCH_SIZE] * (shots // BATCH_SIZE)
    if shots % BATCH_SIZE:
        sizes.append(shots % BATCH_SIZE)
    tasks = [_BatchTask(rho.matrix, assignment, observable, OutputMode(mode), seed, batch, size) for batch, size in enumerate(sizes)]
    moments = _Moments()
    for batch in parallelism.map(_run_batch, tasks):
        moments = moments.merge(batch)

    std = math.sqrt(moments.m2 / (moments.count - 1)) if moments.count > 1 else 0.0
    report = EstimateReport(
        shots=moments.count,
        mean=moments.mean,
        stderr=std / math.sqrt(moments.count),
        abort_fraction=moments.aborts / moments.count,
        gamma_total=assignment.gamma_total,
        seed=seed,
        mode=OutputMode(mode).value,
    )
    get_process_logger().info(
        f"Sampled {shots} shots: mean={report.mean:.6g} ± {report.stderr:.3g}, aborts={report.abort_fraction:.4f}"
    )
    return report


def exact_expectation(rho: DensityMatrix, assignment: GateQpdAssignment, observable: ObservableSpec) -> float:
    """``tr[O · F_m ∘ … ∘ F_1(ρ)]`` with each ``F_k = Σ a_i Λ_i``."""
    state = rho.matrix
    for qpd in assignment.qpds:
        state = sum(item.coefficient * apply_channel(item.choi, state) for item in qpd.items)
    return observable.expectation(state)


def variance_overhead(report: EstimateReport, baseline: Union[float, EstimateReport]) -> float:
    """Ratio of squared standard errors; infinite when the baseline has no spread.

    ``baseline`` is the baseline run's standard error. Passing its whole report
    also checks that both runs used the same shot count.
    """
    if isinstance(baseline, EstimateReport):
        if baseline.shots != report.shots:
            get_process_logger().warning("Variance overhead compares runs with different shot counts")
        baseline = baseline.stderr
    if baseline == 0.0:
        return math.inf
    return (report.stderr / baseline) ** 2


def estimate_rows(reports: Sequence[EstimateReport]) -> List[Dict[str, Any]]:
    return [report.row() for report in reports]
