import numpy as np
import pytest

from qpdsynth.core.channels import (
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    ChoiMatrix,
    DensityMatrix,
    apply_channel,
    channel_rank,
    choi_from_json,
    choi_from_kraus,
    choi_from_unitary,
    choi_to_json,
    compose,
    depolarizing_choi,
    enforce_trace_preservation,
    identity_choi,
    is_tpcp,
    kraus_from_choi,
    linear_combination,
    partial_trace,
    tensor,
)
from qpdsynth.core.gates import GateSpec, gate_unitary
from qpdsynth.exceptions.channel import (
    DimensionMismatchError,
    KrausNormalizationError,
    NotPhysicalError,
    NotUnitaryError,
)
from tests.helpers import random_channel, random_density

P0 = np.diag([1.0, 0.0]).astype(complex)


class TestChoiConstruction:
    def test_identity_kraus(self) -> None:
        choi = choi_from_kraus([np.eye(2)])
        omega = np.array([1, 0, 0, 1]) / np.sqrt(2)
        np.testing.assert_allclose(choi.matrix, np.outer(omega, omega), atol=1e-12)
        assert choi.trace() == pytest.approx(1.0)
        assert channel_rank(choi) == 1

    def test_depolarizing_eigenvalues(self) -> None:
        p = 0.1
        kraus = [
            np.sqrt(1 - 3 * p / 4) * np.eye(2),
            np.sqrt(p / 4) * PAULI_X,
            np.sqrt(p / 4) * PAULI_Y,
            np.sqrt(p / 4) * PAULI_Z,
        ]
        eigenvalues = np.sort(np.linalg.eigvalsh(choi_from_kraus(kraus).matrix))[::-1]
        np.testing.assert_allclose(eigenvalues, [0.925, 0.025, 0.025, 0.025], atol=1e-12)
        np.testing.assert_allclose(choi_from_kraus(kraus).matrix, depolarizing_choi(p).matrix, atol=1e-12)

    def test_postselection_has_half_trace(self) -> None:
        assert choi_from_kraus([P0]).trace() == pytest.approx(0.5)

    def test_trace_increasing_kraus_rejected(self) -> None:
        with pytest.raises(KrausNormalizationError):
            choi_from_kraus([np.eye(2), PAULI_X])

    def test_mismatched_kraus_shapes(self) -> None:
        with pytest.raises(DimensionMismatchError):
            choi_from_kraus([np.eye(2), np.eye(4) / 2])

    def test_unitary_channel_is_rank_one(self) -> None:
        assert choi_from_unitary(PAULI_X).matrix.shape == (4, 4)
        assert channel_rank(choi_from_unitary(PAULI_X)) == 1
        np.testing.assert_allclose(choi_from_unitary(np.eye(2)).matrix, choi_from_kraus([np.eye(2)]).matrix)

    def test_cnot_purity(self) -> None:
        choi = choi_from_unitary(gate_unitary(GateSpec("CNOT", (1, 0))))
        assert choi.matrix.shape == (16, 16)
        assert choi.trace() == pytest.approx(1.0)
        assert np.real(np.trace(choi.matrix @ choi.matrix)) == pytest.approx(1.0)

    def test_non_unitary_rejected(self) -> None:
        with pytest.raises(NotUnitaryError):
            choi_from_unitary(2 * np.eye(2))

    def test_wrong_side_rejected(self) -> None:
        with pytest.raises(DimensionMismatchError):
            ChoiMatrix(1, 1, np.eye(8))


class TestApplyChannel:
    def test_identity_leaves_state(self, rng: np.random.Generator) -> None:
        rho = random_density(rng)
        np.testing.assert_allclose(apply_channel(identity_choi(1), rho), rho, atol=1e-12)

    def test_full_depolarization(self, rng: np.random.Generator) -> None:
        np.testing.assert_allclose(apply_channel(depolarizing_choi(1.0), random_density(rng)), np.eye(2) / 2, atol=1e-12)

    def test_postselection_on_mixed_state(self) -> None:
        out = apply_channel(choi_from_kraus([P0]), np.eye(2) / 2)
        np.testing.assert_allclose(out, np.diag([0.5, 0.0]), atol=1e-12)

    def test_linearity(self, rng: np.random.Generator) -> None:
        first, second = random_channel(rng), random_channel(rng)
        rho = random_density(rng)
        combined = linear_combination([0.7, -0.4], [first, second])
        expected = 0.7 * apply_channel(first, rho) - 0.4 * apply_channel(second, rho)
        np.testing.assert_allclose(apply_channel(combined, rho), expected, atol=1e-10)

    def test_dimension_mismatch(self) -> None:
        with pytest.raises(DimensionMismatchError):
            apply_channel(identity_choi(1), np.eye(4) / 4)

    def test_density_matrix_validation(self) -> None:
        with pytest.raises(NotPhysicalError):
            DensityMatrix(np.diag([1.5, -0.5])).validate()


class TestComposition:
    def test_x_squared_is_identity(self) -> None:
        x = choi_from_unitary(PAULI_X)
        np.testing.assert_allclose(compose(x, x).matrix, identity_choi(1).matrix, atol=1e-10)

    def test_compose_matches_sequential_application(self, rng: np.random.Generator) -> None:
        first, second = random_channel(rng), random_channel(rng)
        rho = random_density(rng)
        expected = apply_channel(second, apply_channel(first, rho))
        np.testing.assert_allclose(apply_channel(compose(second, first), rho), expected, atol=1e-10)

    def test_compose_is_associative(self, rng: np.random.Generator) -> None:
        a, b, c = (random_channel(rng) for _ in range(3))
        np.testing.assert_allclose(compose(a, compose(b, c)).matrix, compose(compose(a, b), c).matrix, atol=1e-10)

    def test_tensor_of_identities(self) -> None:
        np.testing.assert_allclose(tensor(identity_choi(1), identity_choi(1)).matrix, identity_choi(2).matrix, atol=1e-12)

    def test_tensor_acts_on_product_states(self, rng: np.random.Generator) -> None:
        high, low = random_channel(rng), random_channel(rng)
        rho_high, rho_low = random_density(rng), random_density(rng)
        out = apply_channel(tensor(high, low), np.kron(rho_high, rho_low))
        expected = np.kron(apply_channel(high, rho_high), apply_channel(low, rho_low))
        np.testing.assert_allclose(out, expected, atol=1e-10)

    def test_tensor_is_trace_preserving(self, rng: np.random.Generator) -> None:
        assert is_tpcp(tensor(random_channel(rng), random_channel(rng))).is_tpcp

    def test_partial_trace_keeps_trace(self, rng: np.random.Generator) -> None:
        rho = random_density(rng, 2)
        reduced = partial_trace(rho, [2, 2], [1])
        assert np.trace(reduced) == pytest.approx(1.0)

    def test_partial_trace_rejects_bad_spec(self) -> None:
        with pytest.raises(DimensionMismatchError):
            partial_trace(np.eye(4), [2, 2], [2])


class TestDiagnostics:
    def test_identity_verdict(self) -> None:
        verdict = is_tpcp(identity_choi(1))
        assert verdict.is_tpcp
        assert channel_rank(identity_choi(1)) == 1

    def test_postselection_verdict(self) -> None:
        verdict = is_tpcp(choi_from_kraus([P0]))
        assert verdict.is_cp
        assert not verdict.is_tp
        assert verdict.trace_deficit == pytest.approx(0.5)

    def test_depolarizing_verdict(self, depolarized: ChoiMatrix) -> None:
        assert is_tpcp(depolarized).is_tpcp
        assert channel_rank(depolarized) == 4

    def test_kraus_round_trip(self, rng: np.random.Generator) -> None:
        for _ in range(20):
            choi = random_channel(rng, n_kraus=3)
            np.testing.assert_allclose(choi_from_kraus(kraus_from_choi(choi)).matrix, choi.matrix, atol=1e-9)

    def test_enforce_trace_preservation(self, rng: np.random.Generator) -> None:
        choi = 0.5 * random_channel(rng) + ChoiMatrix(1, 1, 0.1 * np.eye(4) / 4)
        fixed = enforce_trace_preservation(choi)
        assert is_tpcp(fixed).is_tpcp
        assert channel_rank(fixed) == channel_rank(choi)

    def test_json_payload(self, depolarized: ChoiMatrix) -> None:
        payload = choi_to_json(depolarized)
        assert payload["convention"] == "trace1"
        np.testing.assert_array_equal(choi_from_json(payload).matrix, depolarized.matrix)
