"""Iterative construction of a noise-adapted decomposition set.

Each round fits a QPD of the target over the current set, measures its diamond
error ``Δ`` and, while ``Δ`` is above the threshold, decomposes the remaining
error ``δ`` into low-rank channels, dilates them, fits RyRz circuits to the
dilations and appends the circuits' noisy realizations to the set.
"""

from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..config.tolerances import DEFAULT_TOLERANCES, Tolerances
from ..exceptions.base import BaseError
from ..exceptions.config import ConfigError
from ..exceptions.decomposition import ConvergenceError, DecompositionError
from ..exceptions.solver import InfeasibleError
from ..models.payloads import ManifestPayload
from ..utils.logging import get_process_logger, log_notice_once
from ..utils.parallel import SERIAL, Parallelism
from .channels import ChoiMatrix, choi_from_unitary, choi_to_json, hermitian_part
from .decomposition import BMConfig, ChannelDecomposition, rank_constrained_decomposition
from .gates import Circuit
from .noise import NoiseOracle
from .qpd import QuasiprobabilityDecomposition, approximate_qpd, exact_qpd, recombine, residual_diamond_norm
from .variational import stinespring_isometry, variational_fit


@dataclass(frozen=True)
class SetEntry:
    label: str
    iteration: int
    circuit: Circuit = field(repr=False)
    choi: ChoiMatrix = field(repr=False)


@dataclass(frozen=True)
class DecompositionSet:
    """Ordered, uniquely labelled noisy channels; the first one realizes the target itself."""

    entries: Tuple[SetEntry, ...] = ()

    def __post_init__(self) -> None:
        labels = [entry.label for entry in self.entries]
        if len(labels) != len(set(labels)):
            raise DecompositionError("Decomposition set labels must be unique")

    def __len__(self) -> int:
        return len(self.entries)

    def extend(self, entries: List[SetEntry]) -> "DecompositionSet":
        return DecompositionSet(self.entries + tuple(entries))

    def labelled(self) -> List[Tuple[str, ChoiMatrix]]:
        return [(entry.label, entry.choi) for entry in self.entries]

    def to_json(self) -> List[Dict[str, Any]]:
        return [
            {
                "label": entry.label,
                "source_iteration": entry.iteration,
                "n_qubits": entry.circuit.n_qubits,
                "gates": entry.circuit.labels(),
                "choi": choi_to_json(entry.choi),
            }
            for entry in self.entries
        ]


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    delta_error: float
    gamma: float
    method: str
    set_size: int
    channels_added: int = 0
    budget: Optional[float] = None
    marginal_deviation: float = 0.0
    bm_objective: Optional[float] = None


@dataclass
class IterationTrace:
    records: List[IterationRecord] = field(default_factory=list)

    def append(self, record: IterationRecord) -> None:
        self.records.append(record)

    @property
    def deltas(self) -> List[float]:
        return [record.delta_error for record in self.records]

    def is_nonincreasing(self, slack: float = 0.0) -> bool:
        deltas = self.deltas
        return all(later <= earlier + slack for earlier, later in zip(deltas, deltas[1:]))

    def rows(self) -> List[Dict[str, Any]]:
        return [asdict(record) for record in self.records]


class StinespringStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    ABORTED = "aborted"


@dataclass(frozen=True)
class StinespringConfig:
    threshold: float = 1e-7
    max_iterations: int = 15
    rank: int = 2
    bm: BMConfig = field(default_factory=BMConfig)
    depth: Optional[int] = None
    fit_restarts: int = 5
    budget_step: float = 0.25
    budget_stall: float = 0.01
    max_budget_steps: int = 20
    seed: int = 0

    def validate(self) -> None:
        if self.threshold <= 0:
            raise ConfigError(f"Threshold must be positive, got {self.threshold}")
        if self.max_iterations < 1 or self.fit_restarts < 1:
            raise ConfigError("max_iterations and fit_restarts must be positive")
        if self.depth is not None and self.depth < 0:
            raise ConfigError(f"Variational depth must be nonnegative, got {self.depth}")
        if self.bm.rank != self.rank:
            raise ConfigError(f"Decomposition rank {self.bm.rank} differs from the dilation rank {self.rank}")
        self.bm.validate()

    def depth_for(self, n_data: int) -> int:
        if self.depth is not None:
            return self.depth
        return 6 if n_data == 2 else 3

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "StinespringConfig":
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown stinespring keys: {sorted(unknown)}")
        rank = data.get("rank", 2)
        bm = BMConfig.from_dict({"rank": rank, **data.pop("bm", {})})
        config = cls(bm=bm, **data)
        config.validate()
        return config


@dataclass(frozen=True)
class StinespringResult:
    decomposition_set: DecompositionSet
    trace: IterationTrace
    qpd: QuasiprobabilityDecomposition
    status: StinespringStatus
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status is StinespringStatus.CONVERGED

    def raise_for_status(self) -> "StinespringResult":
        """Raise ``ConvergenceError`` carrying this result unless the run converged."""
        if not self.converged:
            last = self.trace.records[-1].delta_error if self.trace.records else float("nan")
            raise ConvergenceError(
                f"Stinespring run {self.status.value}: {self.message}",
                result=self,
                details={"iterations": len(self.trace.records), "delta": last},
            )
        return self


def residual_delta(target: ChoiMatrix, qpd: QuasiprobabilityDecomposition) -> ChoiMatrix:
    """``δ = Λ_target − Σ a_i Λ_i`` with signed coefficients, so ``Λ_target = Σ a_i Λ_i + δ``."""
    log_notice_once(
        "delta-sign",
        "Remaining error uses target minus the signed recombination of the QPD",
    )
    delta = target - recombine(qpd)
    return ChoiMatrix(delta.n_in, delta.n_out, hermitian_part(delta.matrix))


def marginal_deviation(delta: ChoiMatrix) -> float:
    """Distance of ``tr₂ δ`` from the nearest multiple of the identity."""
    marginal = delta.output_marginal()
    scale = np.trace(marginal) / delta.d_in
    return float(np.linalg.norm(marginal - scale * np.eye(delta.d_in)))


def fit_qpd(
    target: ChoiMatrix,
    channels: List[Tuple[str, ChoiMatrix]],
    config: StinespringConfig,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> QuasiprobabilityDecomposition:
    """Exact QPD when the target is in the span, else the best approximate QPD of a growing budget sweep."""
    try:
        return exact_qpd(target, channels, tolerances)
    except InfeasibleError:
        pass
    best = None
    budget = 1.0
    for _ in range(config.max_budget_steps):
        qpd = approximate_qpd(target, channels, budget, tolerances=tolerances)
        if best is not None:
            stalled = best.residual_diamond_error - qpd.residual_diamond_error < config.budget_stall * best.residual_diamond_error
            if qpd.residual_diamond_error < best.residual_diamond_error:
                best = qpd
            if stalled:
                break
        else:
            best = qpd
        budget += config.budget_step * (qpd.gamma + 1.0)
    return best


def _realize_item(
    task: Tuple[str, int, ChoiMatrix, int, int, int, int, NoiseOracle, Tolerances]
) -> SetEntry:
    label, iteration, choi, rank, depth, restarts, seed, oracle, tolerances = task
    dilation = stinespring_isometry(choi, rank, tolerances)
    fit = variational_fit(dilation.isometry, depth, restarts, seed)
    circuit = fit.circuit()
    return SetEntry(label, iteration, circuit, oracle(circuit))


def _decompose(
    delta: ChoiMatrix, config: StinespringConfig, seed: int, parallelism: Parallelism, tolerances: Tolerances
) -> ChannelDecomposition:
    decomposition = rank_constrained_decomposition(delta, config.bm, seed=seed, parallelism=parallelism, tolerances=tolerances)
    if decomposition.converged:
        return decomposition
    get_process_logger().warning("Retrying the channel decomposition with doubled restarts")
    retry = BMConfig(**{**asdict(config.bm), "restarts": 2 * config.bm.restarts})
    return rank_constrained_decomposition(delta, retry, seed=seed + 1, parallelism=parallelism, tolerances=tolerances)


def run_stinespring(
    target: Circuit,
    oracle: NoiseOracle,
    config: StinespringConfig = StinespringConfig(),
    parallelism: Parallelism = SERIAL,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> StinespringResult:
    """Grow a decomposition set for ``target`` until the QPD error drops below the threshold.

    Returns the final set, the per-iteration trace and the QPD of the best
    iteration. The status is ``max_iterations`` when the cap is hit and
    ``aborted`` when a channel decomposition fails even after a retry.
    """
    config.validate()
    logger_base = get_process_logger()
    if target.n_data not in (1, 2) or target.n_ancilla:
        raise ConfigError("Stinespring targets are one- or two-qubit circuits without ancillas")
    ideal = choi_from_unitary(target.unitary())
    depth = config.depth_for(target.n_data)
    decomposition_set = DecompositionSet((SetEntry("noisy_target", 0, target, oracle(target)),))
    trace = IterationTrace()
    best: Optional[Tuple[float, QuasiprobabilityDecomposition]] = None

    for iteration in range(1, config.max_iterations + 1):
        qpd = fit_qpd(ideal, decomposition_set.labelled(), config, tolerances)
        delta = residual_delta(ideal, qpd)
        error = residual_diamond_norm(delta, config.threshold, tolerances)
        if best is None or error < best[0]:
            best = (error, qpd)
        record = IterationRecord(
            iteration=iteration,
            delta_error=error,
            gamma=qpd.gamma,
            method=qpd.method,
            set_size=len(decomposition_set),
            budget=qpd.budget,
            marginal_deviation=marginal_deviation(delta),
        )
        logger_base.info(f"Stinespring iteration {iteration}: delta={error:.3e}, gamma={qpd.gamma:.6g}, set={len(decomposition_set)}")
        if trace.records and error > trace.records[-1].delta_error:
            logger_base.warning(f"Diamond error increased from {trace.records[-1].delta_error:.3e} to {error:.3e}")

        if error < config.threshold:
            trace.append(record)
            return StinespringResult(decomposition_set, trace, qpd, StinespringStatus.CONVERGED)

        try:
            decomposition = _decompose(delta, config, config.seed + 1000 * iteration, parallelism, tolerances)
        except BaseError as e:
            trace.append(record)
            return StinespringResult(decomposition_set, trace, best[1], StinespringStatus.ABORTED, f"Channel decomposition failed: {e}")
        if not decomposition.converged:
            trace.append(record)
            return StinespringResult(
                decomposition_set,
                trace,
                best[1],
                StinespringStatus.ABORTED,
                f"Channel decomposition did not converge (objective {decomposition.objective:.3g})",
            )

        tasks = [
            (
                f"it{iteration}_{'p' if item.sign > 0 else 'n'}{index}",
                iteration,
                item.choi,
                config.rank,
                depth,
                config.fit_restarts,
                config.seed + 1000 * iteration + index,
                oracle,
                tolerances,
            )
            for index, item in enumerate(decomposition.items)
        ]
        try:
            added = parallelism.map(_realize_item, tasks)
        except BaseError as e:
            trace.append(record)
            return StinespringResult(decomposition_set, trace, best[1], StinespringStatus.ABORTED, f"Dilation failed: {e}")
        decomposition_set = decomposition_set.extend(added)
        trace.append(
            IterationRecord(**{**asdict(record), "channels_added": len(added), "bm_objective": decomposition.objective})
        )
        logger_base.debug(f"Iteration {iteration} added {len(added)} channels")

    return StinespringResult(
        decomposition_set,
        trace,
        best[1],
        StinespringStatus.MAX_ITERATIONS,
        f"Threshold {config.threshold:g} not reached in {config.max_iterations} iterations",
    )


def optimal_qpd_gamma(result: StinespringResult, tolerances: Tolerances = DEFAULT_TOLERANCES) -> float:
    """Minimal γ of an exact QPD of the target over the final set."""
    return exact_qpd(result.qpd.target, result.decomposition_set.labelled(), tolerances).gamma


def manifest(result: StinespringResult, config: StinespringConfig, oracle: NoiseOracle) -> ManifestPayload:
    return {
        "status": result.status.value,
        "message": result.message,
        "config": asdict(config),
        "noise": oracle.describe(),
        "iterations": result.trace.rows(),
        "labels": [entry.label for entry in result.decomposition_set.entries],
        "final": {
            "gamma": result.qpd.gamma,
            "delta_error": result.trace.records[-1].delta_error if result.trace.records else None,
            "coefficients": {item.label: item.coefficient for item in result.qpd.items},
        },
    }
