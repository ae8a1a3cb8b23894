"""Diamond norm of Hermitian-preserving maps by semidefinite programming.

All programs act on the unnormalized Choi matrix ``J = 2^n_in · Λ``. The
dual program minimizes ``½(‖tr₂ Y₀‖∞ + ‖tr₂ Y₁‖∞)`` subject to
``[[Y₀, −J], [−J, Y₁]] ⪰ 0``; for Hermitian ``J`` the optimum is attained
at ``Y₀ = Y₁``, which gives the smaller symmetric program
``min ‖tr₂ Y‖∞ s.t. Y ± J ⪰ 0`` used inside the QPD solves.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Literal, Optional

import numpy as np
import numpy.typing as npt

from ..config.tolerances import DEFAULT_TOLERANCES, Tolerances
from ..exceptions.channel import DimensionMismatchError, NotHermitianError
from ..exceptions.solver import SolverError
from .channels import ChoiMatrix, ComplexMatrix, is_hermitian
from .solvers import PsdBlock, SemidefiniteProgram, require_optimal, solve_sdp

Formulation = Literal["dual", "primal", "symmetric"]


@lru_cache(maxsize=8)
def hermitian_basis(d: int) -> npt.NDArray[np.complex128]:
    """Real basis of the ``d × d`` Hermitian matrices, shape ``(d², d, d)``."""
    basis = np.zeros((d * d, d, d), dtype=complex)
    index = 0
    for j in range(d):
        basis[index, j, j] = 1.0
        index += 1
    for j in range(d):
        for k in range(j + 1, d):
            basis[index, j, k] = basis[index, k, j] = 1.0
            basis[index + 1, j, k] = 1j
            basis[index + 1, k, j] = -1j
            index += 2
    basis.setflags(write=False)
    return basis


def output_trace_stack(stack: npt.NDArray[np.complex128], d_in: int, d_out: int) -> npt.NDArray[np.complex128]:
    """``tr₂`` applied to every matrix of a stack."""
    n = stack.shape[0]
    return np.einsum("niojo->nij", stack.reshape(n, d_in, d_out, d_in, d_out))


@dataclass(frozen=True, eq=False)
class DiamondNormProgram:
    """Diamond-norm SDP for the affine family ``J(a) = offset + Σ_i a_i directions[i]``.

    Variables are laid out as ``[a (n_coefficients), Y parameters, t epigraph scalars, extra]``;
    callers that add their own variables (coefficient bounds) pass ``n_extra``.
    """

    n_in: int
    n_out: int
    offset: ComplexMatrix
    directions: Optional[npt.NDArray[np.complex128]] = None
    symmetric: bool = True

    def __post_init__(self) -> None:
        d = 2 ** (self.n_in + self.n_out)
        offset = np.asarray(self.offset, dtype=complex)
        if offset.shape != (d, d):
            raise DimensionMismatchError(f"Offset must be {d}x{d}, got {offset.shape}")
        directions = np.zeros((0, d, d), dtype=complex) if self.directions is None else np.asarray(self.directions, dtype=complex)
        if directions.shape[1:] != (d, d):
            raise DimensionMismatchError(f"Directions must be a stack of {d}x{d} matrices")
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "directions", directions)

    @property
    def d(self) -> int:
        return 2 ** (self.n_in + self.n_out)

    @property
    def d_in(self) -> int:
        return 2**self.n_in

    @property
    def n_coefficients(self) -> int:
        return self.directions.shape[0]

    @property
    def n_y_blocks(self) -> int:
        return 1 if self.symmetric else 2

    @property
    def n_core(self) -> int:
        return self.n_coefficients + self.n_y_blocks * (self.d**2 + 1)

    def y_slice(self, which: int) -> slice:
        start = self.n_coefficients + which * self.d**2
        return slice(start, start + self.d**2)

    def t_index(self, which: int) -> int:
        return self.n_coefficients + self.n_y_blocks * self.d**2 + which

    def cost(self, n_extra: int = 0) -> npt.NDArray[np.float64]:
        cost = np.zeros(self.n_core + n_extra)
        weight = 1.0 / self.n_y_blocks
        for which in range(self.n_y_blocks):
            cost[self.t_index(which)] = weight
        return cost

    def blocks(self, n_extra: int = 0) -> list:
        d, d_in, d_out = self.d, self.d_in, 2**self.n_out
        n = self.n_core + n_extra
        k = self.n_coefficients
        basis = hermitian_basis(d)
        traced = output_trace_stack(basis, d_in, d_out)
        blocks = []

        if self.symmetric:
            for sign in (-1.0, 1.0):
                coefficients = np.zeros((n, d, d), dtype=complex)
                coefficients[:k] = sign * self.directions
                coefficients[self.y_slice(0)] = basis
                blocks.append(PsdBlock.hermitian(sign * self.offset, coefficients))
        else:
            zero = np.zeros((d, d), dtype=complex)
            coefficients = np.zeros((n, 2 * d, 2 * d), dtype=complex)
            coefficients[:k, :d, d:] = -self.directions
            coefficients[:k, d:, :d] = -self.directions.conj().transpose(0, 2, 1)
            coefficients[self.y_slice(0), :d, :d] = basis
            coefficients[self.y_slice(1), d:, d:] = basis
            constant = np.block([[zero, -self.offset], [-self.offset.conj().T, zero]])
            blocks.append(PsdBlock.hermitian(constant, coefficients))

        for which in range(self.n_y_blocks):
            coefficients = np.zeros((n, d_in, d_in), dtype=complex)
            coefficients[self.y_slice(which)] = -traced
            coefficients[self.t_index(which)] = np.eye(d_in)
            blocks.append(PsdBlock.hermitian(np.zeros((d_in, d_in), dtype=complex), coefficients))
        return blocks

    def program(self) -> SemidefiniteProgram:
        return SemidefiniteProgram(cost=self.cost(), blocks=self.blocks())

    def unpack(self, x: npt.NDArray[np.float64]) -> Dict[str, np.ndarray]:
        basis = hermitian_basis(self.d)
        unpacked = {"a": x[: self.n_coefficients]}
        for which in range(self.n_y_blocks):
            unpacked[f"Y{which}"] = np.tensordot(x[self.y_slice(which)], basis, axes=1)
        return unpacked


def _check_hermitian(choi: ChoiMatrix, tolerances: Tolerances) -> None:
    if not is_hermitian(choi.matrix, tolerances.hermitian * max(1.0, float(np.abs(choi.matrix).max()))):
        raise NotHermitianError("Diamond norm requires a Hermitian-preserving map (Hermitian Choi matrix)")


def _primal_program(J: ComplexMatrix, d_in: int, d_out: int) -> SemidefiniteProgram:
    """``max Re tr(J† X)`` s.t. ``[[ρ₀ ⊗ 𝟙, X], [X†, ρ₁ ⊗ 𝟙]] ⪰ 0``, ``tr ρ₀ = tr ρ₁ = 1``."""
    d = d_in * d_out
    n_x = 2 * d * d
    n_rho = d_in * d_in
    n = n_x + 2 * n_rho
    coefficients = np.zeros((n, 2 * d, 2 * d), dtype=complex)

    rows, cols = np.divmod(np.arange(d * d), d)
    entries = np.arange(d * d)
    coefficients[entries, rows, d + cols] = 1.0
    coefficients[entries, d + cols, rows] = 1.0
    coefficients[d * d + entries, rows, d + cols] = 1j
    coefficients[d * d + entries, d + cols, rows] = -1j

    rho_basis = hermitian_basis(d_in)
    lifted = np.stack([np.kron(b, np.eye(d_out)) for b in rho_basis])
    coefficients[n_x : n_x + n_rho, :d, :d] = lifted
    coefficients[n_x + n_rho :, d:, d:] = lifted

    cost = np.zeros(n)
    cost[: d * d] = -J.real.reshape(-1)
    cost[d * d : n_x] = -J.imag.reshape(-1)

    traces = np.real(np.trace(rho_basis, axis1=1, axis2=2))
    A_eq = np.zeros((2, n))
    A_eq[0, n_x : n_x + n_rho] = traces
    A_eq[1, n_x + n_rho :] = traces
    return SemidefiniteProgram(
        cost=cost,
        blocks=[PsdBlock.hermitian(np.zeros((2 * d, 2 * d), dtype=complex), coefficients)],
        A_eq=A_eq,
        b_eq=np.ones(2),
    )


def diamond_norm(
    choi: ChoiMatrix,
    formulation: Formulation = "dual",
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> float:
    """Diamond norm of the Hermitian-preserving map with Choi matrix ``choi``."""
    _check_hermitian(choi, tolerances)
    J = 0.5 * (choi.unnormalized + choi.unnormalized.conj().T)
    if np.allclose(J, 0.0, atol=1e-14):
        return 0.0

    if formulation == "primal":
        solution = require_optimal(solve_sdp(_primal_program(J, choi.d_in, choi.d_out), tolerances), "Primal diamond-norm SDP", tolerances.accept_inaccurate)
        return max(0.0, -solution.objective)
    if formulation not in ("dual", "symmetric"):
        raise SolverError(f"Unknown diamond-norm formulation '{formulation}'")

    program = DiamondNormProgram(choi.n_in, choi.n_out, J, symmetric=formulation == "symmetric")
    solution = require_optimal(solve_sdp(program.program(), tolerances), "Dual diamond-norm SDP", tolerances.accept_inaccurate)
    return max(0.0, solution.objective)


def diamond_distance(
    first: ChoiMatrix,
    second: ChoiMatrix,
    formulation: Formulation = "dual",
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> float:
    return diamond_norm(first - second, formulation, tolerances)


def pauli_diamond_norm(probabilities: Dict[str, float]) -> float:
    """Closed-form ``‖id − P‖⋄ = 2 Σ_{k≠𝟙} p_k`` for a Pauli channel ``P``."""
    return 2.0 * sum(p for label, p in probabilities.items() if set(label) != {"I"})
