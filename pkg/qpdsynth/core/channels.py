"""Dense linear algebra for quantum maps.

Conventions shared by every module:

* Qubits are little-endian: qubit ``k`` is bit ``k`` of a basis-state index, so a
  register's matrices are ``kron(q_{n-1}, ..., q_1, q_0)``.
* Choi matrices are ordered input ⊗ output and trace-normalized,
  ``Λ = (id ⊗ E)(|Ω⟩⟨Ω|)`` with ``|Ω⟩ = 2^{-n/2} Σ_i |i⟩|i⟩``. A trace-preserving map
  satisfies ``tr₂ Λ = 𝟙 / 2^n`` where ``tr₂`` traces out the output factor. The
  unnormalized matrix ``J = 2^n_in · Λ`` is what the diamond-norm programs consume.
* Superoperators act on row-major vectorized density matrices.
"""

from dataclasses import dataclass
from functools import reduce
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import numpy.typing as npt

from ..config.tolerances import DEFAULT_TOLERANCES, Tolerances
from ..exceptions.channel import (
    DimensionMismatchError,
    KrausNormalizationError,
    NotHermitianError,
    NotPhysicalError,
    NotUnitaryError,
)
from ..models.payloads import ChoiPayload

ComplexMatrix = npt.NDArray[np.complex128]

CONVENTION = "trace1"

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"I": PAULI_I, "X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}


def as_matrix(data: Any) -> ComplexMatrix:
    matrix = np.asarray(data, dtype=complex)
    if matrix.ndim != 2:
        raise DimensionMismatchError(f"Expected a matrix, got an array of shape {matrix.shape}")
    return matrix


def is_hermitian(matrix: ComplexMatrix, tol: float = DEFAULT_TOLERANCES.hermitian) -> bool:
    matrix = as_matrix(matrix)
    if matrix.shape[0] != matrix.shape[1]:
        return False
    return bool(np.allclose(matrix, matrix.conj().T, atol=tol, rtol=0.0))


def is_unitary(matrix: ComplexMatrix, tol: float = DEFAULT_TOLERANCES.unitary) -> bool:
    matrix = as_matrix(matrix)
    if matrix.shape[0] != matrix.shape[1]:
        return False
    identity = np.eye(matrix.shape[0])
    return bool(np.allclose(matrix.conj().T @ matrix, identity, atol=tol, rtol=0.0))


def hermitian_part(matrix: ComplexMatrix) -> ComplexMatrix:
    return 0.5 * (matrix + matrix.conj().T)


def qubit_count(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if 2**n != dim:
        raise DimensionMismatchError(f"Dimension {dim} is not a power of two")
    return n


def pauli_string(labels: str) -> ComplexMatrix:
    """Pauli operator for ``labels`` written most-significant qubit first ("XZ" = X on qubit 1)."""
    return reduce(np.kron, (PAULIS[label] for label in labels), np.eye(1, dtype=complex))


def _readonly(matrix: ComplexMatrix) -> ComplexMatrix:
    frozen = np.array(matrix, dtype=complex, copy=True)
    frozen.setflags(write=False)
    return frozen


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: ComplexMatrix

    def __post_init__(self) -> None:
        object.__setattr__(self, "matrix", _readonly(as_matrix(self.matrix)))
        qubit_count(self.matrix.shape[0])

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_qubits(self) -> int:
        return qubit_count(self.dim)

    @classmethod
    def from_state(cls, vector: Sequence[complex]) -> "DensityMatrix":
        psi = np.asarray(vector, dtype=complex).reshape(-1)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def zero_state(cls, n_qubits: int) -> "DensityMatrix":
        psi = np.zeros(2**n_qubits, dtype=complex)
        psi[0] = 1.0
        return cls.from_state(psi)

    def validate(self, tolerances: Tolerances = DEFAULT_TOLERANCES) -> None:
        if not is_hermitian(self.matrix, tolerances.hermitian):
            raise NotHermitianError("Density matrix is not Hermitian")
        min_eig = float(np.linalg.eigvalsh(hermitian_part(self.matrix)).min())
        if min_eig < -tolerances.density:
            raise NotPhysicalError("Density matrix is not positive semidefinite", details={"min_eigenvalue": min_eig})
        trace = float(np.trace(self.matrix).real)
        if abs(trace - 1.0) > tolerances.density:
            raise NotPhysicalError("Density matrix does not have unit trace", details={"trace": trace})


@dataclass(frozen=True, eq=False)
class ChoiMatrix:
    """Trace-normalized Choi matrix of a linear map from ``n_in`` to ``n_out`` qubits.

    Instances are immutable and support the linear-space operations needed to
    form QPD recombinations and residual maps (``+``, ``-``, scalar ``*``).
    """

    n_in: int
    n_out: int
    matrix: ComplexMatrix
    convention: str = CONVENTION

    def __post_init__(self) -> None:
        matrix = as_matrix(self.matrix)
        side = 2 ** (self.n_in + self.n_out)
        if matrix.shape != (side, side):
            raise DimensionMismatchError(
                f"Choi matrix of a {self.n_in}->{self.n_out} qubit map must be {side}x{side}, got {matrix.shape}"
            )
        if self.convention != CONVENTION:
            raise DimensionMismatchError(f"Unsupported Choi convention '{self.convention}'")
        object.__setattr__(self, "matrix", _readonly(matrix))

    @property
    def d_in(self) -> int:
        return 2**self.n_in

    @property
    def d_out(self) -> int:
        return 2**self.n_out

    @property
    def unnormalized(self) -> ComplexMatrix:
        """``J = 2^n_in · Λ``, the Choi matrix without the maximally-entangled normalization."""
        return self.d_in * self.matrix

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def output_marginal(self) -> ComplexMatrix:
        """``tr₂ Λ``; equals ``𝟙 / 2^n_in`` exactly for trace-preserving maps."""
        return partial_trace(self.matrix, [self.d_in, self.d_out], [1])

    def same_shape(self, other: "ChoiMatrix") -> bool:
        return (self.n_in, self.n_out) == (other.n_in, other.n_out)

    def _check(self, other: "ChoiMatrix") -> None:
        if not self.same_shape(other):
            raise DimensionMismatchError(
                f"Cannot combine a {self.n_in}->{self.n_out} map with a {other.n_in}->{other.n_out} map"
            )

    def __add__(self, other: "ChoiMatrix") -> "ChoiMatrix":
        self._check(other)
        return ChoiMatrix(self.n_in, self.n_out, self.matrix + other.matrix)

    def __sub__(self, other: "ChoiMatrix") -> "ChoiMatrix":
        self._check(other)
        return ChoiMatrix(self.n_in, self.n_out, self.matrix - other.matrix)

    def __mul__(self, scalar: float) -> "ChoiMatrix":
        return ChoiMatrix(self.n_in, self.n_out, scalar * self.matrix)

    __rmul__ = __mul__

    def __neg__(self) -> "ChoiMatrix":
        return ChoiMatrix(self.n_in, self.n_out, -self.matrix)

    def distance(self, other: "ChoiMatrix") -> float:
        """Frobenius distance between the two Choi matrices."""
        self._check(other)
        return float(np.linalg.norm(self.matrix - other.matrix))


def zero_choi(n_in: int, n_out: Optional[int] = None) -> ChoiMatrix:
    n_out = n_in if n_out is None else n_out
    side = 2 ** (n_in + n_out)
    return ChoiMatrix(n_in, n_out, np.zeros((side, side), dtype=complex))


def linear_combination(coefficients: Sequence[float], chois: Sequence[ChoiMatrix]) -> ChoiMatrix:
    if len(coefficients) != len(chois) or not chois:
        raise DimensionMismatchError("Coefficient and channel lists must be nonempty and of equal length")
    first = chois[0]
    total = np.zeros_like(first.matrix)
    for coefficient, choi in zip(coefficients, chois):
        first._check(choi)
        total = total + float(coefficient) * choi.matrix
    return ChoiMatrix(first.n_in, first.n_out, total)


def choi_from_kraus(kraus: Sequence[ComplexMatrix], tolerances: Tolerances = DEFAULT_TOLERANCES) -> ChoiMatrix:
    """Choi matrix of ``ρ ↦ Σ_k K_k ρ K_k†``.

    Trace-non-increasing sets (postselection) are allowed; sets whose
    ``Σ K†K`` exceeds the identity are rejected.
    """
    operators = [as_matrix(k) for k in kraus]
    if not operators:
        raise DimensionMismatchError("At least one Kraus operator is required")
    shape = operators[0].shape
    if any(k.shape != shape for k in operators):
        raise DimensionMismatchError("Kraus operators must share one shape", details={"shape": shape})
    d_out, d_in = shape
    n_in, n_out = qubit_count(d_in), qubit_count(d_out)

    completeness = sum(k.conj().T @ k for k in operators)
    largest = float(np.linalg.eigvalsh(hermitian_part(completeness)).max())
    if largest > 1.0 + tolerances.kraus:
        raise KrausNormalizationError(
            "Kraus operators increase the trace", details={"max_eigenvalue": largest}
        )

    vectors = np.stack([k.T.reshape(-1) for k in operators], axis=1)
    return ChoiMatrix(n_in, n_out, (vectors @ vectors.conj().T) / d_in)


def choi_from_unitary(unitary: ComplexMatrix, tolerances: Tolerances = DEFAULT_TOLERANCES) -> ChoiMatrix:
    unitary = as_matrix(unitary)
    if not is_unitary(unitary, tolerances.unitary):
        raise NotUnitaryError("Matrix is not unitary", details={"shape": unitary.shape})
    return choi_from_kraus([unitary], tolerances)


def kraus_from_choi(choi: ChoiMatrix, cutoff: float = DEFAULT_TOLERANCES.rank_cutoff) -> List[ComplexMatrix]:
    """Canonical Kraus operators from the eigendecomposition of a CP Choi matrix."""
    eigenvalues, eigenvectors = np.linalg.eigh(hermitian_part(choi.matrix))
    if eigenvalues.min() < -cutoff:
        raise NotPhysicalError(
            "Map is not completely positive", details={"min_eigenvalue": float(eigenvalues.min())}
        )
    operators = []
    for index in np.argsort(eigenvalues)[::-1]:
        value = eigenvalues[index]
        if value <= cutoff:
            continue
        vector = np.sqrt(choi.d_in * value) * eigenvectors[:, index]
        operators.append(vector.reshape(choi.d_in, choi.d_out).T)
    return operators


def to_superoperator(choi: ChoiMatrix) -> ComplexMatrix:
    tensor = choi.unnormalized.reshape(choi.d_in, choi.d_out, choi.d_in, choi.d_out)
    return tensor.transpose(1, 3, 0, 2).reshape(choi.d_out**2, choi.d_in**2)


def from_superoperator(superoperator: ComplexMatrix) -> ChoiMatrix:
    superoperator = as_matrix(superoperator)
    d_out = int(round(np.sqrt(superoperator.shape[0])))
    d_in = int(round(np.sqrt(superoperator.shape[1])))
    if d_out**2 != superoperator.shape[0] or d_in**2 != superoperator.shape[1]:
        raise DimensionMismatchError("Superoperator sides must be squares", details={"shape": superoperator.shape})
    tensor = superoperator.reshape(d_out, d_out, d_in, d_in).transpose(2, 0, 3, 1)
    matrix = tensor.reshape(d_in * d_out, d_in * d_out) / d_in
    return ChoiMatrix(qubit_count(d_in), qubit_count(d_out), matrix)


def apply_channel(choi: ChoiMatrix, rho: Union[DensityMatrix, ComplexMatrix]) -> ComplexMatrix:
    """Evaluate the map on ``rho``; linear, so any square matrix is accepted."""
    matrix = rho.matrix if isinstance(rho, DensityMatrix) else as_matrix(rho)
    if matrix.shape != (choi.d_in, choi.d_in):
        raise DimensionMismatchError(
            f"State of shape {matrix.shape} does not match a {choi.d_in}-dimensional input"
        )
    tensor = choi.unnormalized.reshape(choi.d_in, choi.d_out, choi.d_in, choi.d_out)
    return np.einsum("ij,iojp->op", matrix, tensor)


def compose(second: ChoiMatrix, first: ChoiMatrix) -> ChoiMatrix:
    """Choi matrix of ``second ∘ first``."""
    if first.n_out != second.n_in:
        raise DimensionMismatchError(
            f"Cannot compose: first map outputs {first.n_out} qubits, second expects {second.n_in}"
        )
    return from_superoperator(to_superoperator(second) @ to_superoperator(first))


def tensor(first: ChoiMatrix, second: ChoiMatrix) -> ChoiMatrix:
    """Choi matrix of ``first ⊗ second``; ``first`` acts on the more significant qubits."""
    d_in = first.d_in * second.d_in
    d_out = first.d_out * second.d_out
    product = np.kron(first.matrix, second.matrix).reshape(
        first.d_in, first.d_out, second.d_in, second.d_out,
        first.d_in, first.d_out, second.d_in, second.d_out,
    )
    matrix = product.transpose(0, 2, 1, 3, 4, 6, 5, 7).reshape(d_in * d_out, d_in * d_out)
    return ChoiMatrix(first.n_in + second.n_in, first.n_out + second.n_out, matrix)


def partial_trace(matrix: ComplexMatrix, dims: Sequence[int], traced: Sequence[int]) -> ComplexMatrix:
    """Trace out the subsystems listed in ``traced``; ``dims`` are kron-ordered factor sizes."""
    matrix = as_matrix(matrix)
    dims = [int(d) for d in dims]
    total = int(np.prod(dims))
    if matrix.shape != (total, total):
        raise DimensionMismatchError(f"Matrix of shape {matrix.shape} does not factor as {dims}")
    if len(set(traced)) != len(traced) or any(k < 0 or k >= len(dims) for k in traced):
        raise DimensionMismatchError(f"Invalid subsystem specification {list(traced)} for {len(dims)} factors")

    current = list(dims)
    reshaped = matrix.reshape(dims + dims)
    for k in sorted(traced, reverse=True):
        reshaped = np.trace(reshaped, axis1=k, axis2=k + len(current))
        current.pop(k)
    side = int(np.prod(current)) if current else 1
    return reshaped.reshape(side, side)


@dataclass(frozen=True)
class TpcpVerdict:
    is_cp: bool
    is_tp: bool
    min_eigenvalue: float
    tp_deviation: float
    trace_deficit: float

    @property
    def is_tpcp(self) -> bool:
        return self.is_cp and self.is_tp


def is_tpcp(choi: ChoiMatrix, tolerances: Tolerances = DEFAULT_TOLERANCES) -> TpcpVerdict:
    min_eig = float(np.linalg.eigvalsh(hermitian_part(choi.matrix)).min())
    deviation = float(np.linalg.norm(choi.output_marginal() - np.eye(choi.d_in) / choi.d_in))
    return TpcpVerdict(
        is_cp=min_eig >= -tolerances.cp,
        is_tp=deviation <= tolerances.tp,
        min_eigenvalue=min_eig,
        tp_deviation=deviation,
        trace_deficit=1.0 - choi.trace(),
    )


def channel_rank(choi: ChoiMatrix, cutoff: float = DEFAULT_TOLERANCES.rank_cutoff) -> int:
    eigenvalues = np.linalg.eigvalsh(hermitian_part(choi.matrix))
    return int(np.sum(eigenvalues > cutoff))


def enforce_trace_preservation(choi: ChoiMatrix, floor: float = 1e-12) -> ChoiMatrix:
    """Map a CP Choi matrix with positive-definite marginal onto a TP one of the same rank.

    Applies the congruence ``(A ⊗ 𝟙) Λ (A ⊗ 𝟙)`` with ``A = (2^n tr₂ Λ)^{-1/2}``.
    """
    marginal = hermitian_part(choi.output_marginal())
    eigenvalues, eigenvectors = np.linalg.eigh(choi.d_in * marginal)
    if eigenvalues.min() <= floor:
        raise NotPhysicalError(
            "Output marginal is singular; the map cannot be made trace preserving",
            details={"min_eigenvalue": float(eigenvalues.min())},
        )
    inverse_root = (eigenvectors / np.sqrt(eigenvalues)) @ eigenvectors.conj().T
    lift = np.kron(inverse_root, np.eye(choi.d_out))
    return ChoiMatrix(choi.n_in, choi.n_out, hermitian_part(lift @ choi.matrix @ lift))


def identity_choi(n_qubits: int) -> ChoiMatrix:
    return choi_from_unitary(np.eye(2**n_qubits))


def depolarizing_choi(p: float, n_qubits: int = 1) -> ChoiMatrix:
    """``D_p(ρ) = (1 − p) ρ + p tr(ρ) 𝟙 / 2^n``."""
    d = 2**n_qubits
    maximally_mixed = np.eye(d * d, dtype=complex) / (d * d)
    return (1.0 - p) * identity_choi(n_qubits) + ChoiMatrix(n_qubits, n_qubits, p * maximally_mixed)


def pauli_channel_choi(probabilities: Dict[str, float]) -> ChoiMatrix:
    """Pauli channel from probabilities keyed by Pauli strings of equal length."""
    kraus = [np.sqrt(p) * pauli_string(label) for label, p in probabilities.items() if p > 0]
    return choi_from_kraus(kraus)


def amplitude_damping_kraus(gamma: float) -> List[ComplexMatrix]:
    return [
        np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex),
        np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex),
    ]


def phase_damping_kraus(gamma: float) -> List[ComplexMatrix]:
    return [
        np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex),
        np.array([[0, 0], [0, np.sqrt(gamma)]], dtype=complex),
    ]


def choi_to_json(choi: ChoiMatrix) -> ChoiPayload:
    return {
        "n_in": choi.n_in,
        "n_out": choi.n_out,
        "convention": choi.convention,
        "re": choi.matrix.real.tolist(),
        "im": choi.matrix.imag.tolist(),
    }


def choi_from_json(data: ChoiPayload) -> ChoiMatrix:
    matrix = np.asarray(data["re"], dtype=float) + 1j * np.asarray(data["im"], dtype=float)
    return ChoiMatrix(int(data["n_in"]), int(data["n_out"]), matrix, data.get("convention", CONVENTION))
