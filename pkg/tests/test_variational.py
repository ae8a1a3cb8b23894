import numpy as np
import pytest

from qpdsynth.core.channels import (
    amplitude_damping_kraus,
    apply_channel,
    choi_from_kraus,
    choi_from_unitary,
    is_unitary,
)
from qpdsynth.core.diamond import diamond_distance
from qpdsynth.core.noise import SimulatorOracle
from qpdsynth.core.variational import (
    DepthSweepRow,
    VariationalForm,
    best_depth,
    fit_objective,
    haar_unitary,
    isometry_channel,
    stinespring_isometry,
    sweep_depth,
    sweep_rows,
    variational_fit,
)
from qpdsynth.exceptions.channel import DimensionMismatchError, NotPhysicalError
from qpdsynth.exceptions.config import ConfigError
from qpdsynth.exceptions.decomposition import RankBoundError
from tests.helpers import random_density


class TestStinespringIsometry:
    def test_unitary_needs_no_ancilla(self) -> None:
        u = haar_unitary(2, seed=3)
        dilation = stinespring_isometry(choi_from_unitary(u))
        assert dilation.n_ancilla == 0
        assert dilation.n_qubits == 1
        overlap = abs(np.vdot(dilation.isometry, u)) / 2
        assert overlap == pytest.approx(1.0)

    def test_amplitude_damping(self, rng: np.random.Generator) -> None:
        choi = choi_from_kraus(amplitude_damping_kraus(0.3))
        dilation = stinespring_isometry(choi, rank_bound=2)
        assert dilation.n_ancilla == 1
        assert dilation.isometry.shape == (4, 2)
        np.testing.assert_allclose(dilation.isometry.conj().T @ dilation.isometry, np.eye(2), atol=1e-10)
        assert is_unitary(dilation.unitary)
        rho = random_density(rng)
        np.testing.assert_allclose(
            apply_channel(isometry_channel(dilation.isometry), rho), apply_channel(choi, rho), atol=1e-10
        )

    def test_rank_bound(self, depolarized) -> None:
        with pytest.raises(RankBoundError):
            stinespring_isometry(depolarized, rank_bound=2)

    def test_trace_decreasing_map_rejected(self) -> None:
        with pytest.raises(NotPhysicalError):
            stinespring_isometry(choi_from_kraus([np.diag([1.0, 0.0])]))

    def test_rank_four_uses_two_ancillas(self, depolarized) -> None:
        assert stinespring_isometry(depolarized).n_ancilla == 2


class TestVariationalForm:
    def test_parameter_count(self) -> None:
        form = VariationalForm(3, 4, n_data=1)
        assert form.n_parameters == 2 * 3 * 5
        assert form.n_cnots == 8

    def test_zero_angles_give_identity(self) -> None:
        form = VariationalForm(2, 2)
        np.testing.assert_allclose(form.unitary(np.zeros(form.n_parameters)), np.eye(4), atol=1e-12)
        value, gradient = fit_objective(np.zeros(form.n_parameters), np.eye(4), form)
        assert value == pytest.approx(0.0, abs=1e-12)
        assert not np.any(gradient)

    def test_isometry_columns(self, rng: np.random.Generator) -> None:
        form = VariationalForm(2, 1, n_data=1)
        theta = rng.uniform(0, 2 * np.pi, form.n_parameters)
        isometry = form.isometry(theta)
        assert isometry.shape == (4, 2)
        np.testing.assert_allclose(isometry, form.unitary(theta)[:, :2])

    def test_wrong_parameter_count(self) -> None:
        with pytest.raises(DimensionMismatchError):
            VariationalForm(2, 1).unitary(np.zeros(3))

    @pytest.mark.parametrize("phase_optimized", [False, True])
    def test_gradient_matches_finite_differences(self, phase_optimized: bool, rng: np.random.Generator) -> None:
        form = VariationalForm(2, 2, n_data=1)
        target = haar_unitary(4, seed=11)[:, :2]
        theta = rng.uniform(0, 2 * np.pi, form.n_parameters)
        _, gradient = fit_objective(theta, target, form, phase_optimized)
        step = 1e-6
        numeric = np.array(
            [
                (fit_objective(theta + step * e, target, form, phase_optimized)[0]
                 - fit_objective(theta - step * e, target, form, phase_optimized)[0]) / (2 * step)
                for e in np.eye(form.n_parameters)
            ]
        )
        np.testing.assert_allclose(gradient, numeric, atol=1e-6)


class TestVariationalFit:
    def test_single_qubit_unitary(self) -> None:
        target = haar_unitary(2, seed=5)
        fit = variational_fit(target, depth=1, restarts=4, seed=2, phase_optimized=True)
        assert fit.objective <= 1e-4
        assert len(fit.restart_objectives) == 4
        assert fit.objective == min(fit.restart_objectives)

    def test_deterministic_for_seed(self) -> None:
        target = haar_unitary(2, seed=5)
        first = variational_fit(target, depth=1, restarts=2, seed=9)
        second = variational_fit(target, depth=1, restarts=2, seed=9)
        np.testing.assert_array_equal(first.theta, second.theta)

    def test_realizes_with_oracle(self, noiseless_oracle: SimulatorOracle) -> None:
        target = haar_unitary(2, seed=5)
        fit = variational_fit(target, depth=1, restarts=3, oracle=noiseless_oracle)
        assert diamond_distance(fit.channel, choi_from_unitary(target)) <= 1e-3


class TestDepthSweep:
    def test_sweep_rows(self, noiseless_oracle: SimulatorOracle) -> None:
        rows = sweep_depth(haar_unitary(2, seed=1), [0, 1], noiseless_oracle, restarts=3)
        assert [row.depth for row in rows] == [0, 1]
        assert rows[1].diamond_error <= 1e-3
        assert best_depth(rows) == 1
        assert set(sweep_rows(rows)[0]) == {"m", "fit_objective", "diamond_error"}

    def test_failed_depth_is_reported(self) -> None:
        def failing(circuit):
            raise ConfigError("simulator unavailable")

        rows = sweep_depth(haar_unitary(2, seed=1), [1], failing, restarts=1)
        assert np.isnan(rows[0].diamond_error)
        assert "simulator unavailable" in rows[0].error
        assert best_depth(rows) is None

    def test_best_depth_prefers_shallow_on_ties(self) -> None:
        rows = [DepthSweepRow(2, 0.0, 0.01), DepthSweepRow(1, 0.0, 0.01), DepthSweepRow(3, 0.0, 0.02)]
        assert best_depth(rows) == 1

    def test_haar_unitary_is_seeded(self) -> None:
        np.testing.assert_array_equal(haar_unitary(4, seed=2), haar_unitary(4, seed=2))
        assert is_unitary(haar_unitary(4, seed=2))
