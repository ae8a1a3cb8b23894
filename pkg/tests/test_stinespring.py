import numpy as np
import pytest

from qpdsynth.core.channels import (
    ChoiMatrix,
    choi_from_kraus,
    choi_from_unitary,
    from_superoperator,
    identity_choi,
    to_superoperator,
)
from qpdsynth.core.decomposition import two_channel_decomposition
from qpdsynth.core.gates import Circuit, GateSpec, target_circuit
from qpdsynth.core.noise import NoiseModel, SimulatorOracle, standard_basis
from qpdsynth.core.qpd import QpdItem, QuasiprobabilityDecomposition, optimal_gamma
from qpdsynth.core.stinespring import (
    DecompositionSet,
    IterationRecord,
    IterationTrace,
    SetEntry,
    StinespringConfig,
    StinespringStatus,
    fit_qpd,
    manifest,
    marginal_deviation,
    optimal_qpd_gamma,
    residual_delta,
    run_stinespring,
)
from qpdsynth.exceptions.config import ConfigError
from qpdsynth.exceptions.decomposition import ConvergenceError, DecompositionError


def _record(iteration: int, delta: float) -> IterationRecord:
    return IterationRecord(iteration=iteration, delta_error=delta, gamma=1.0, method="exact", set_size=1)


class TestResidual:
    def test_exact_qpd_leaves_nothing(self) -> None:
        target = identity_choi(1)
        qpd = QuasiprobabilityDecomposition(target, (QpdItem("id", 1.0, target),), 0.0)
        assert np.allclose(residual_delta(target, qpd).matrix, 0.0)

    def test_residual_sign(self) -> None:
        target = identity_choi(1)
        qpd = QuasiprobabilityDecomposition(target, (QpdItem("id", 0.25, target),), 0.0)
        np.testing.assert_allclose(residual_delta(target, qpd).matrix, 0.75 * target.matrix)

    def test_marginal_deviation(self) -> None:
        assert marginal_deviation(identity_choi(1)) == pytest.approx(0.0, abs=1e-12)
        postselection = choi_from_kraus([np.diag([1.0, 0.0])])
        assert marginal_deviation(postselection) == pytest.approx(np.sqrt(2) / 4)


class TestDecompositionSet:
    def test_labels_are_unique(self) -> None:
        circuit = target_circuit("H")
        entry = SetEntry("noisy_target", 0, circuit, identity_choi(1))
        with pytest.raises(DecompositionError):
            DecompositionSet((entry, entry))

    def test_extend_and_json(self) -> None:
        circuit = target_circuit("H")
        choi = choi_from_unitary(circuit.unitary())
        first = DecompositionSet((SetEntry("noisy_target", 0, circuit, choi),))
        grown = first.extend([SetEntry("it1_p0", 1, circuit, choi)])
        assert len(first) == 1
        assert [label for label, _ in grown.labelled()] == ["noisy_target", "it1_p0"]
        assert grown.to_json()[1]["source_iteration"] == 1


class TestIterationTrace:
    def test_nonincreasing(self) -> None:
        trace = IterationTrace()
        for iteration, delta in enumerate([0.1, 0.05, 0.05], start=1):
            trace.append(_record(iteration, delta))
        assert trace.is_nonincreasing()
        trace.append(_record(4, 0.06))
        assert not trace.is_nonincreasing()
        assert trace.is_nonincreasing(slack=0.02)
        assert len(trace.rows()) == 4


class TestStinespringConfig:
    def test_defaults(self) -> None:
        config = StinespringConfig.from_dict({})
        assert config.threshold == pytest.approx(1e-7)
        assert config.depth_for(1) == 3
        assert config.depth_for(2) == 6
        assert StinespringConfig(depth=2).depth_for(2) == 2

    def test_rank_propagates_to_decomposition(self) -> None:
        config = StinespringConfig.from_dict({"rank": 3, "bm": {"restarts": 2}})
        assert config.bm.rank == 3
        assert config.bm.restarts == 2

    def test_rank_mismatch(self) -> None:
        with pytest.raises(ConfigError):
            StinespringConfig(rank=3).validate()

    def test_unknown_key(self) -> None:
        with pytest.raises(ConfigError):
            StinespringConfig.from_dict({"treshold": 1e-5})

    def test_nonpositive_threshold(self) -> None:
        with pytest.raises(ConfigError):
            StinespringConfig.from_dict({"threshold": 0.0})


class TestRunStinespring:
    def test_noiseless_target_converges_immediately(self, noiseless_oracle: SimulatorOracle) -> None:
        circuit = target_circuit("RY", 0.4)
        config = StinespringConfig()
        result = run_stinespring(circuit, noiseless_oracle, config)
        assert result.status is StinespringStatus.CONVERGED
        assert result.converged
        assert len(result.trace.records) == 1
        assert result.qpd.gamma == pytest.approx(1.0, abs=1e-8)
        assert optimal_qpd_gamma(result) == pytest.approx(1.0, abs=1e-8)
        assert result.raise_for_status() is result

        payload = manifest(result, config, noiseless_oracle)
        assert set(payload) == {"status", "message", "config", "noise", "iterations", "labels", "final"}
        assert payload["labels"] == ["noisy_target"]
        assert payload["status"] == "converged"

    def test_ancilla_targets_rejected(self, noiseless_oracle: SimulatorOracle) -> None:
        circuit = Circuit(2, (GateSpec("CNOT", (0, 1)),), n_data=1)
        with pytest.raises(ConfigError):
            run_stinespring(circuit, noiseless_oracle)

    def test_unconverged_run_raises_with_result(self) -> None:
        circuit = target_circuit("RY", 0.4)
        oracle = SimulatorOracle(NoiseModel(p2=0.05, p1=0.05))
        config = StinespringConfig.from_dict({"max_iterations": 1, "fit_restarts": 1})
        result = run_stinespring(circuit, oracle, config)
        assert not result.converged
        assert len(result.trace.records) == 1
        with pytest.raises(ConvergenceError) as excinfo:
            result.raise_for_status()
        assert excinfo.value.result is result
        assert excinfo.value.details["iterations"] == 1
        assert excinfo.value.details["delta"] > config.threshold

    def test_fit_qpd_falls_back_to_budget_sweep(self) -> None:
        circuit = target_circuit("RY", 0.4)
        oracle = SimulatorOracle(NoiseModel(p2=0.05, p1=0.05))
        ideal = choi_from_unitary(circuit.unitary())
        qpd = fit_qpd(ideal, [("noisy_target", oracle(circuit))], StinespringConfig())
        assert qpd.method == "approximate"
        assert qpd.residual_diamond_error > 0

    @pytest.mark.slow
    def test_depolarized_rotation_improves(self) -> None:
        circuit = target_circuit("RY", 0.4)
        oracle = SimulatorOracle(NoiseModel(p2=0.01, p1=0.01))
        config = StinespringConfig.from_dict({"threshold": 1e-5, "max_iterations": 4, "fit_restarts": 3})
        result = run_stinespring(circuit, oracle, config)
        deltas = result.trace.deltas
        assert len(deltas) >= 2
        assert min(deltas[1:]) < deltas[0]
        assert all(label.startswith(("noisy_target", "it")) for label, _ in result.decomposition_set.labelled())


def _noise_inverse_gamma(ideal: ChoiMatrix, noisy: ChoiMatrix) -> float:
    """γ of ``N⁻¹ ∘ U`` where the noisy gate is ``N ∘ U``."""
    unitary = to_superoperator(ideal)
    correction = unitary @ np.linalg.inv(to_superoperator(noisy)) @ unitary
    return two_channel_decomposition(from_superoperator(correction)).gamma


class TestDepolarizedCnot:
    @pytest.mark.slow
    def test_delta_decays_below_threshold(self) -> None:
        circuit = target_circuit("CNOT")
        oracle = SimulatorOracle(NoiseModel(p2=0.02))
        config = StinespringConfig()
        result = run_stinespring(circuit, oracle, config)

        assert result.converged
        deltas = result.trace.deltas
        assert len(deltas) <= 15
        assert deltas[-1] < config.threshold
        assert all(later < earlier for earlier, later in zip(deltas, deltas[1:]))
        assert all(record.channels_added == 16 for record in result.trace.records[:-1])

        ideal = choi_from_unitary(circuit.unitary())
        assert optimal_qpd_gamma(result) <= optimal_gamma(ideal, standard_basis(2, oracle)) + 1e-9

    @pytest.mark.slow
    @pytest.mark.parametrize("p2", [0.004, 0.01, 0.02])
    def test_gamma_close_to_noise_inverse(self, p2: float) -> None:
        circuit = target_circuit("CNOT")
        oracle = SimulatorOracle(NoiseModel(p2=p2))
        ideal = choi_from_unitary(circuit.unitary())
        result = run_stinespring(circuit, oracle)

        assert result.converged
        gamma_opt = _noise_inverse_gamma(ideal, oracle(circuit))
        assert optimal_qpd_gamma(result) - 1 <= 1.10 * (gamma_opt - 1)
