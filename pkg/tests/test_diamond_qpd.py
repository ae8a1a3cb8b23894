from dataclasses import replace
from unittest.mock import patch

import numpy as np
import pytest

from qpdsynth.core.channels import (
    PAULI_X,
    ChoiMatrix,
    choi_from_unitary,
    identity_choi,
    pauli_channel_choi,
    zero_choi,
)
from qpdsynth.core.diamond import diamond_distance, diamond_norm, pauli_diamond_norm
from qpdsynth.core.gates import GateSpec, gate_unitary, target_circuit
from qpdsynth.core.noise import NoiseMode, NoiseModel, SimulatorOracle, pauli_set, standard_basis
from qpdsynth.core.qpd import (
    QuasiprobabilityDecomposition,
    approximate_qpd,
    exact_qpd,
    optimal_gamma,
    recombine,
    residual_diamond_norm,
    trace_norm_bound,
)
from qpdsynth.core.solvers import solve_sdp
from qpdsynth.core.tradeoff import DEFAULT_GRID_POINTS, TradeoffCurve, default_budget_grid, tradeoff_curve
from qpdsynth.exceptions.channel import NotHermitianError
from qpdsynth.exceptions.decomposition import TradeoffCurveError
from qpdsynth.exceptions.solver import InfeasibleError, SolverError
from tests.helpers import random_channel, random_hermitian_map

P = 0.1
INVERSE_DEPOLARIZING_GAMMA = (1 + P / 2) / (1 - P)


@pytest.fixture
def ry_circuit():
    return target_circuit("RY", 0.3)


@pytest.fixture
def noisy_pauli_set(ry_circuit):
    oracle = SimulatorOracle(NoiseModel(p2=P, p1=P), NoiseMode.BLOCK)
    return pauli_set(ry_circuit, oracle)


@pytest.fixture
def ry_target(ry_circuit) -> ChoiMatrix:
    return choi_from_unitary(ry_circuit.unitary())


class TestDiamondNorm:
    def test_zero_map(self) -> None:
        assert diamond_norm(zero_choi(1, 1)) == 0.0

    def test_orthogonal_unitaries(self) -> None:
        assert diamond_distance(identity_choi(1), choi_from_unitary(PAULI_X)) == pytest.approx(2.0, abs=1e-6)

    def test_depolarizing_distance(self, depolarized: ChoiMatrix) -> None:
        expected = pauli_diamond_norm({"I": 1 - 3 * P / 4, "X": P / 4, "Y": P / 4, "Z": P / 4})
        assert expected == pytest.approx(0.15)
        assert diamond_distance(identity_choi(1), depolarized) == pytest.approx(expected, abs=1e-6)

    def test_channel_has_unit_norm(self, rng: np.random.Generator) -> None:
        assert diamond_norm(random_channel(rng)) == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("formulation", ["primal", "symmetric"])
    def test_formulations_agree(self, formulation: str, rng: np.random.Generator) -> None:
        difference = random_channel(rng) - random_channel(rng)
        assert diamond_norm(difference, formulation) == pytest.approx(diamond_norm(difference), abs=1e-6)

    def test_pauli_channel_closed_form(self) -> None:
        probabilities = {"I": 0.9, "X": 0.05, "Z": 0.05}
        channel = pauli_channel_choi(probabilities)
        assert diamond_distance(identity_choi(1), channel) == pytest.approx(pauli_diamond_norm(probabilities), abs=1e-6)

    @pytest.mark.parametrize("seed", range(25))
    def test_primal_matches_dual_on_hermitian_maps(self, seed: int) -> None:
        choi = random_hermitian_map(np.random.default_rng(seed))
        assert diamond_norm(choi, "primal") == pytest.approx(diamond_norm(choi, "dual"), abs=1e-6)

    @pytest.mark.parametrize("seed", range(10))
    def test_random_pauli_channels_match_closed_form(self, seed: int) -> None:
        weights = np.random.default_rng(seed).dirichlet(np.ones(4))
        probabilities = dict(zip(("I", "X", "Y", "Z"), (float(w) for w in weights)))
        channel = pauli_channel_choi(probabilities)
        assert diamond_distance(identity_choi(1), channel) == pytest.approx(pauli_diamond_norm(probabilities), abs=1e-6)

    def test_triangle_inequality(self, rng: np.random.Generator) -> None:
        a, b, c = (random_channel(rng) for _ in range(3))
        assert diamond_distance(a, c) <= diamond_distance(a, b) + diamond_distance(b, c) + 1e-6

    def test_non_hermitian_rejected(self) -> None:
        matrix = np.zeros((4, 4), dtype=complex)
        matrix[0, 1] = 1.0
        with pytest.raises(NotHermitianError):
            diamond_norm(ChoiMatrix(1, 1, matrix))


class TestExactQpd:
    def test_target_in_set(self) -> None:
        qpd = exact_qpd(identity_choi(1), [("id", identity_choi(1)), ("x", choi_from_unitary(PAULI_X))])
        assert qpd.gamma == pytest.approx(1.0)
        assert qpd.is_exact()

    def test_inverse_depolarizing(self, ry_target: ChoiMatrix, noisy_pauli_set) -> None:
        qpd = exact_qpd(ry_target, noisy_pauli_set)
        assert qpd.gamma == pytest.approx(INVERSE_DEPOLARIZING_GAMMA, abs=1e-6)
        assert qpd.residual_diamond_error <= 1e-8
        assert [item.label for item in qpd.items] == ["I", "X", "Y", "Z"]
        assert qpd.items[0].coefficient > 0
        assert all(item.coefficient < 0 for item in qpd.items[1:])

    @pytest.mark.parametrize("p", [0.01, 0.05, 0.1])
    def test_inverse_depolarizing_closed_form(self, p: float, ry_circuit, ry_target: ChoiMatrix) -> None:
        oracle = SimulatorOracle(NoiseModel(p2=p, p1=p), NoiseMode.BLOCK)
        qpd = exact_qpd(ry_target, pauli_set(ry_circuit, oracle))
        assert qpd.gamma == pytest.approx((1 + p / 2) / (1 - p), abs=1e-6)

    def test_recombination_matches_target(self, ry_target: ChoiMatrix, noisy_pauli_set) -> None:
        qpd = exact_qpd(ry_target, noisy_pauli_set)
        np.testing.assert_allclose(recombine(qpd).matrix, ry_target.matrix, atol=1e-8)

    def test_noiseless_standard_basis(self, ry_target: ChoiMatrix, noiseless_oracle: SimulatorOracle) -> None:
        assert optimal_gamma(ry_target, standard_basis(1, noiseless_oracle)) == pytest.approx(1.0, abs=1e-6)

    def test_outside_span(self) -> None:
        cnot = choi_from_unitary(gate_unitary(GateSpec("CNOT", (1, 0))))
        with pytest.raises(InfeasibleError):
            exact_qpd(cnot, [identity_choi(2)])

    def test_residual_reported_as_diamond_norm(self, depolarized: ChoiMatrix) -> None:
        residual = identity_choi(1) - depolarized
        assert trace_norm_bound(residual) == pytest.approx(0.3)
        assert residual_diamond_norm(residual, 1e-7) == pytest.approx(0.15, abs=1e-6)
        assert residual_diamond_norm(residual, 1.0) == pytest.approx(0.3)

    def test_unlabelled_channels(self) -> None:
        qpd = exact_qpd(identity_choi(1), [identity_choi(1)])
        assert qpd.items[0].label == "E0"

    def test_json_round_trip(self, ry_target: ChoiMatrix, noisy_pauli_set) -> None:
        qpd = exact_qpd(ry_target, noisy_pauli_set)
        restored = QuasiprobabilityDecomposition.from_json(qpd.to_json())
        assert restored.gamma == qpd.gamma
        np.testing.assert_array_equal(restored.coefficients, qpd.coefficients)
        assert "chois" not in qpd.to_json(include_chois=False)


class TestApproximateQpd:
    def test_zero_budget(self, ry_target: ChoiMatrix, noisy_pauli_set) -> None:
        qpd = approximate_qpd(ry_target, noisy_pauli_set, 0.0)
        assert qpd.gamma == 0.0
        assert qpd.residual_diamond_error == pytest.approx(1.0, abs=1e-6)

    def test_budget_above_optimum_is_exact(self, ry_target: ChoiMatrix, noisy_pauli_set) -> None:
        qpd = approximate_qpd(ry_target, noisy_pauli_set, INVERSE_DEPOLARIZING_GAMMA + 0.05)
        assert qpd.residual_diamond_error <= 1e-5
        assert qpd.gamma <= INVERSE_DEPOLARIZING_GAMMA + 0.05 + 1e-9

    def test_unit_budget_beats_noisy_gate(self, ry_target: ChoiMatrix, noisy_pauli_set) -> None:
        qpd = approximate_qpd(ry_target, noisy_pauli_set, 1.0)
        assert qpd.gamma <= 1.0 + 1e-9
        assert qpd.residual_diamond_error <= 0.15 + 1e-6
        assert qpd.residual_diamond_error > 0

    def test_rescaled_coefficients_get_their_own_residual(self, ry_target: ChoiMatrix, noisy_pauli_set) -> None:
        def overshooting(program, tolerances):
            solution = solve_sdp(program, tolerances)
            x = solution.x.copy()
            x[0] *= 1.2
            return replace(solution, x=x)

        with patch("qpdsynth.core.qpd.solve_sdp", side_effect=overshooting):
            qpd = approximate_qpd(ry_target, noisy_pauli_set, 1.0)
        assert qpd.gamma == pytest.approx(1.0)
        assert qpd.residual_diamond_error == pytest.approx(diamond_distance(ry_target, recombine(qpd)), abs=1e-6)

    def test_physicality_constraints(self, ry_target: ChoiMatrix, noisy_pauli_set) -> None:
        free = approximate_qpd(ry_target, noisy_pauli_set, 1.05)
        constrained = approximate_qpd(ry_target, noisy_pauli_set, 1.05, enforce_cp=True, enforce_tp=True)
        assert constrained.residual_diamond_error >= free.residual_diamond_error - 1e-6
        eigenvalues = np.linalg.eigvalsh(recombine(constrained).matrix)
        assert eigenvalues.min() >= -1e-6

    def test_negative_budget(self, ry_target: ChoiMatrix, noisy_pauli_set) -> None:
        with pytest.raises(SolverError):
            approximate_qpd(ry_target, noisy_pauli_set, -1.0)


class TestTradeoffCurve:
    def test_default_grid(self) -> None:
        grid = default_budget_grid(1.5)
        assert grid[0] == pytest.approx(1.0)
        assert 1.5 in grid
        assert grid[-1] == pytest.approx(1.575)

    def test_curve_is_nonincreasing(self, ry_target: ChoiMatrix, noisy_pauli_set) -> None:
        budgets = [1.0, 1.04, 1.08, 1.12, INVERSE_DEPOLARIZING_GAMMA]
        curve = tradeoff_curve(ry_target, noisy_pauli_set, budgets, label="ry")
        assert curve.complete
        assert curve.monotonicity_violation() <= 1e-6
        assert curve.errors[-1] <= 1e-5
        assert curve.gamma_opt == pytest.approx(INVERSE_DEPOLARIZING_GAMMA, abs=1e-6)
        assert len(curve.rows()) == 5

    @pytest.mark.slow
    @pytest.mark.parametrize("name, angle", [("RY", 0.3), ("CNOT", None), ("SWAP", None)])
    def test_depolarizing_curve_endpoints_and_shape(self, name: str, angle) -> None:
        circuit = target_circuit(name, angle)
        oracle = SimulatorOracle(NoiseModel(p2=0.02, p1=0.02), NoiseMode.BLOCK)
        ideal = choi_from_unitary(circuit.unitary())
        curve = tradeoff_curve(ideal, pauli_set(circuit, oracle), label=name.lower())

        assert curve.complete
        assert curve.budgets.size == DEFAULT_GRID_POINTS
        assert curve.budgets[0] == pytest.approx(1.0)
        at_optimum = int(np.argmin(np.abs(curve.budgets - curve.gamma_opt)))
        assert curve.errors[at_optimum] <= 1e-6
        assert curve.errors[0] == pytest.approx(diamond_distance(ideal, oracle(circuit)), abs=1e-6)
        assert curve.monotonicity_violation() <= 1e-6
        assert curve.convexity_violation() <= 1e-7

    def test_curve_needs_budgets_without_exact_qpd(self) -> None:
        cnot = choi_from_unitary(gate_unitary(GateSpec("CNOT", (1, 0))))
        with pytest.raises(TradeoffCurveError):
            tradeoff_curve(cnot, [identity_choi(2)])

    def test_curve_sorts_samples(self) -> None:
        curve = TradeoffCurve(np.array([2.0, 1.0]), np.array([0.0, 0.1]))
        assert curve.min_budget == 1.0
        assert curve.errors[0] == 0.1

    def test_convexity_violation(self) -> None:
        curve = TradeoffCurve(np.array([1.0, 2.0, 3.0]), np.array([1.0, 0.8, 0.0]))
        assert curve.convexity_violation() == pytest.approx(0.3)

    def test_mismatched_arrays(self) -> None:
        with pytest.raises(TradeoffCurveError):
            TradeoffCurve(np.array([1.0]), np.array([0.0, 1.0]))
