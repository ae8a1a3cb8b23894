import numpy as np

from qpdsynth.core.channels import ChoiMatrix, choi_from_kraus


def random_channel(rng: np.random.Generator, n_qubits: int = 1, n_kraus: int = 2) -> ChoiMatrix:
    """Random CPTP map from a random isometry split into Kraus blocks."""
    d = 2**n_qubits
    raw = rng.normal(size=(n_kraus * d, d)) + 1j * rng.normal(size=(n_kraus * d, d))
    isometry, _ = np.linalg.qr(raw)
    return choi_from_kraus(list(isometry.reshape(n_kraus, d, d)))


def random_density(rng: np.random.Generator, n_qubits: int = 1) -> np.ndarray:
    d = 2**n_qubits
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_hermitian_map(rng: np.random.Generator, n_qubits: int = 1) -> ChoiMatrix:
    """Random Hermitian-preserving map scaled to unit trace norm of its Choi matrix."""
    d = 4**n_qubits
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    hermitian = a + a.conj().T
    return ChoiMatrix(n_qubits, n_qubits, hermitian / np.sum(np.abs(np.linalg.eigvalsh(hermitian))))
