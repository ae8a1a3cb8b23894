import math

import numpy as np
import pytest

from qpdsynth.core.channels import (
    PAULI_Z,
    ChoiMatrix,
    DensityMatrix,
    choi_from_kraus,
    choi_from_unitary,
    identity_choi,
)
from qpdsynth.core.gates import target_circuit
from qpdsynth.core.noise import NoiseMode, NoiseModel, SimulatorOracle, pauli_set
from qpdsynth.core.qpd import QpdItem, QuasiprobabilityDecomposition, exact_qpd
from qpdsynth.core.sampler import (
    EstimateReport,
    GateQpdAssignment,
    ObservableSpec,
    OutputMode,
    batch_generator,
    estimate_rows,
    exact_expectation,
    sample_circuit,
    variance_overhead,
)
from qpdsynth.exceptions.channel import DimensionMismatchError, NotHermitianError
from qpdsynth.exceptions.decomposition import DecompositionError
from qpdsynth.utils.parallel import Parallelism

P = 0.1
ANGLE = 0.3
ZERO = DensityMatrix(np.diag([1.0, 0.0]))
PLUS = DensityMatrix(np.full((2, 2), 0.5))
Z = ObservableSpec(PAULI_Z)


def _single(choi: ChoiMatrix, label: str = "only") -> QuasiprobabilityDecomposition:
    return QuasiprobabilityDecomposition(choi, (QpdItem(label, 1.0, choi),), 0.0)


@pytest.fixture
def pauli_qpd() -> QuasiprobabilityDecomposition:
    circuit = target_circuit("RY", ANGLE)
    oracle = SimulatorOracle(NoiseModel(p2=P, p1=P), NoiseMode.BLOCK)
    return exact_qpd(choi_from_unitary(circuit.unitary()), pauli_set(circuit, oracle))


def _report(mean: float, stderr: float, shots: int = 100) -> EstimateReport:
    return EstimateReport(shots=shots, mean=mean, stderr=stderr, abort_fraction=0.0, gamma_total=1.0, seed=0)


class TestSampler:
    def test_ideal_channel_is_exact(self) -> None:
        assignment = GateQpdAssignment((_single(identity_choi(1)),))
        report = sample_circuit(ZERO, assignment, Z, shots=1000, seed=1)
        assert report.mean == pytest.approx(1.0)
        assert report.stderr == 0.0
        assert report.abort_fraction == 0.0
        assert report.gamma_total == 1.0

    def test_same_seed_same_estimate(self, pauli_qpd: QuasiprobabilityDecomposition) -> None:
        assignment = GateQpdAssignment((pauli_qpd,))
        first = sample_circuit(ZERO, assignment, Z, shots=25_000, seed=42)
        second = sample_circuit(ZERO, assignment, Z, shots=25_000, seed=42)
        assert first == second
        other = sample_circuit(ZERO, assignment, Z, shots=25_000, seed=43)
        assert other.mean != first.mean

    def test_worker_count_does_not_change_estimate(self, pauli_qpd: QuasiprobabilityDecomposition) -> None:
        assignment = GateQpdAssignment((pauli_qpd,))
        serial = sample_circuit(ZERO, assignment, Z, shots=25_000, seed=5)
        pooled = sample_circuit(ZERO, assignment, Z, shots=25_000, seed=5, parallelism=Parallelism(2))
        assert serial.mean == pytest.approx(pooled.mean, rel=1e-12, abs=1e-15)
        assert serial.stderr == pytest.approx(pooled.stderr, rel=1e-12)

    def test_total_gamma_is_product(self, pauli_qpd: QuasiprobabilityDecomposition) -> None:
        assignment = GateQpdAssignment((pauli_qpd, pauli_qpd, pauli_qpd))
        assert assignment.gamma_total == pytest.approx(((1 + P / 2) / (1 - P)) ** 3, abs=1e-6)
        assert assignment.gamma_total == pytest.approx(1.588, abs=1e-3)

    def test_estimate_is_unbiased(self, pauli_qpd: QuasiprobabilityDecomposition) -> None:
        assignment = GateQpdAssignment((pauli_qpd,))
        exact = exact_expectation(ZERO, assignment, Z)
        assert exact == pytest.approx(math.cos(ANGLE), abs=1e-8)
        report = sample_circuit(ZERO, assignment, Z, shots=100_000, seed=3)
        assert abs(report.mean - exact) <= 4 * report.stderr

    def test_outcome_mode(self) -> None:
        assignment = GateQpdAssignment((_single(identity_choi(1)),))
        report = sample_circuit(PLUS, assignment, Z, shots=20_000, seed=8, mode=OutputMode.OUTCOME)
        assert report.mode == "outcome"
        assert abs(report.mean) <= 4 * report.stderr
        assert report.stderr == pytest.approx(1 / math.sqrt(20_000), rel=0.05)

    def test_postselection_aborts(self) -> None:
        postselect = choi_from_kraus([np.diag([1.0, 0.0])])
        assignment = GateQpdAssignment((_single(postselect, "p0"),))
        report = sample_circuit(PLUS, assignment, Z, shots=20_000, seed=2)
        assert report.abort_fraction == pytest.approx(0.5, abs=0.02)
        assert report.mean == pytest.approx(exact_expectation(PLUS, assignment, Z), abs=4 * report.stderr)


class TestSamplerInputs:
    def test_shots_must_be_positive(self) -> None:
        assignment = GateQpdAssignment((_single(identity_choi(1)),))
        with pytest.raises(DecompositionError):
            sample_circuit(ZERO, assignment, Z, shots=0)

    def test_observable_dimension(self) -> None:
        assignment = GateQpdAssignment((_single(identity_choi(1)),))
        with pytest.raises(DimensionMismatchError):
            sample_circuit(ZERO, assignment, ObservableSpec(np.eye(4)), shots=10)

    def test_observable_must_be_hermitian(self) -> None:
        with pytest.raises(NotHermitianError):
            ObservableSpec(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_empty_assignment(self) -> None:
        with pytest.raises(DecompositionError):
            GateQpdAssignment(())


class TestReports:
    def test_batch_streams(self) -> None:
        assert batch_generator(7, 0).random() == batch_generator(7, 0).random()
        assert batch_generator(7, 0).random() != batch_generator(7, 1).random()

    def test_variance_overhead_from_baseline_stderr(self) -> None:
        assert variance_overhead(_report(0.5, 0.02), 0.01) == pytest.approx(4.0)
        assert variance_overhead(_report(0.5, 0.02), 0.0) == math.inf

    def test_variance_overhead_from_baseline_report(self) -> None:
        assert variance_overhead(_report(0.5, 0.02), _report(0.5, 0.01)) == pytest.approx(4.0)
        assert variance_overhead(_report(0.5, 0.02), _report(1.0, 0.0)) == math.inf

    def test_row_columns(self) -> None:
        rows = estimate_rows([_report(0.5, 0.01)])
        assert list(rows[0]) == ["shots", "mean", "stderr", "abort_frac", "gamma_total", "seed"]
        assert _report(0.5, 0.1, shots=100).variance == pytest.approx(1.0)
