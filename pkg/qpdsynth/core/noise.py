"""Noise models, the simulated noise oracle and the 16-element standard basis."""

from dataclasses import asdict, dataclass
from enum import Enum
from itertools import product
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from ..exceptions.config import ConfigError
from ..exceptions.gates import GateError
from ..utils.logging import log_notice_once
from .channels import (
    PAULI_I,
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    ChoiMatrix,
    ComplexMatrix,
    amplitude_damping_kraus,
    from_superoperator,
    pauli_string,
    phase_damping_kraus,
    tensor,
)
from .gates import Circuit, GateSpec, embed_operator, gate_unitary

Labelled = Tuple[str, ChoiMatrix]


class NoiseMode(str, Enum):
    """Where noise is inserted when a circuit is realized.

    ``PER_GATE`` follows every gate with the model's noise on its support.
    ``BLOCK`` runs the circuit ideally and applies one noise layer on the data qubits.
    """

    PER_GATE = "per_gate"
    BLOCK = "block"


@dataclass(frozen=True)
class NoiseModel:
    p2: float = 0.0
    p1: Optional[float] = None
    gamma_ad: float = 0.0
    gamma_pd: float = 0.0
    measurement_error: float = 0.0

    def __post_init__(self) -> None:
        if self.p1 is None:
            object.__setattr__(self, "p1", 0.1 * self.p2)
        for name, value in asdict(self).items():
            if not 0.0 <= value < 1.0:
                raise ConfigError(f"Noise rate '{name}' must lie in [0, 1), got {value}")

    @property
    def is_noiseless(self) -> bool:
        return all(value == 0.0 for value in asdict(self).values())

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NoiseModel":
        known = {"p2", "p1", "gamma_ad", "gamma_pd", "measurement_error"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown noise keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def depolarizing_kraus(p: float, n_qubits: int) -> List[ComplexMatrix]:
    """Kraus form of ``(1 − p) ρ + p 𝟙/2^n`` as a Pauli mixture."""
    weight = p / 4**n_qubits
    operators = []
    for labels in product("IXYZ", repeat=n_qubits):
        label = "".join(labels)
        coefficient = 1.0 - p + weight if set(label) == {"I"} else weight
        if coefficient > 0:
            operators.append(np.sqrt(coefficient) * pauli_string(label))
    return operators


def _kraus_superoperator(kraus: Sequence[ComplexMatrix], qubits: Sequence[int], n_qubits: int) -> ComplexMatrix:
    total = None
    for operator in kraus:
        full = embed_operator(operator, qubits, n_qubits)
        term = np.kron(full, full.conj())
        total = term if total is None else total + term
    return total


class CircuitSimulator:
    """Superoperator simulation of a circuit under a noise model."""

    def __init__(self, noise: NoiseModel, mode: NoiseMode = NoiseMode.PER_GATE):
        self.noise = noise
        self.mode = NoiseMode(mode)

    def gate_noise(self, gate: GateSpec) -> List[Tuple[List[ComplexMatrix], Tuple[int, ...]]]:
        """Noise channels (Kraus list, support) that follow ``gate``, in order."""
        layers: List[Tuple[List[ComplexMatrix], Tuple[int, ...]]] = []
        rate = self.noise.p2 if gate.arity == 2 else self.noise.p1
        if rate > 0:
            layers.append((depolarizing_kraus(rate, gate.arity), gate.qubits))
        for qubit in gate.qubits:
            if self.noise.gamma_ad > 0:
                layers.append((amplitude_damping_kraus(self.noise.gamma_ad), (qubit,)))
            if self.noise.gamma_pd > 0:
                layers.append((phase_damping_kraus(self.noise.gamma_pd), (qubit,)))
        return layers

    def block_noise(self, n_data: int) -> List[Tuple[List[ComplexMatrix], Tuple[int, ...]]]:
        if n_data == 2:
            return self.gate_noise(GateSpec("CNOT", (1, 0)))
        layers = []
        for qubit in range(n_data):
            layers.extend(self.gate_noise(GateSpec("I", (qubit,))))
        return layers

    def gate_kraus(self, gate: GateSpec) -> List[ComplexMatrix]:
        if gate.name == "P0" and self.noise.measurement_error > 0:
            e = self.noise.measurement_error
            return [np.sqrt(1 - e) * gate_unitary(gate), np.sqrt(e) * np.diag([0.0, 1.0]).astype(complex)]
        return [gate_unitary(gate)]

    def superoperator(self, circuit: Circuit) -> ComplexMatrix:
        """Superoperator of the whole register, row-major vectorization."""
        n = circuit.n_qubits
        total = np.eye(4**n, dtype=complex)
        for gate in circuit.gates:
            total = _kraus_superoperator(self.gate_kraus(gate), gate.qubits, n) @ total
            if self.mode is NoiseMode.PER_GATE:
                for kraus, support in self.gate_noise(gate):
                    total = _kraus_superoperator(kraus, support, n) @ total
        if self.mode is NoiseMode.BLOCK:
            for kraus, support in self.block_noise(circuit.n_data):
                total = _kraus_superoperator(kraus, support, n) @ total
        return total

    def realize(self, circuit: Circuit) -> ChoiMatrix:
        """Choi matrix on the data qubits, ancillas prepared in ``|0⟩`` and traced out."""
        d_data = 2**circuit.n_data
        d_anc = 2**circuit.n_ancilla
        full = self.superoperator(circuit).reshape(
            d_anc, d_data, d_anc, d_data, d_anc, d_data, d_anc, d_data
        )
        reduced = np.einsum("aoaqij->oqij", full[:, :, :, :, 0, :, 0, :])
        return from_superoperator(reduced.reshape(d_data**2, d_data**2))


class NoiseOracle(Protocol):
    """Maps an intended circuit to the channel realized on hardware."""

    def __call__(self, circuit: Circuit) -> ChoiMatrix: ...

    def describe(self) -> Dict[str, Any]: ...


@dataclass(frozen=True)
class SimulatorOracle:
    """Noise oracle backed by exact density-matrix simulation; picklable for worker pools."""

    noise: NoiseModel
    mode: NoiseMode = NoiseMode.PER_GATE

    def __call__(self, circuit: Circuit) -> ChoiMatrix:
        return simulate_noisy_circuit(circuit, self.noise, self.mode)

    def describe(self) -> Dict[str, Any]:
        return {**self.noise.to_dict(), "mode": NoiseMode(self.mode).value}


def simulate_noisy_circuit(
    circuit: Circuit, noise: NoiseModel, mode: NoiseMode = NoiseMode.PER_GATE
) -> ChoiMatrix:
    return CircuitSimulator(noise, mode).realize(circuit)


# Gate sequences in operator-product order: the rightmost gate runs first.
STANDARD_BASIS_SEQUENCES: Dict[str, str] = {
    "id": "I",
    "sigma_x": "H S S H",
    "sigma_y": "H S S H S S",
    "sigma_z": "S S",
    "r_x": "H S S S H",
    "r_y": "S H S S S H S S S",
    "r_z": "S S S",
    "r_yz": "H S S S H S S",
    "r_zx": "S S S H S S S H S S S",
    "r_xy": "H S S H S S S",
    "pi_x": "S H S H P0 H S S S H S S S",
    "pi_y": "H S S S H P0 H S H",
    "pi_z": "P0",
    "pi_yz": "S H S H P0 H S H S S S",
    "pi_zx": "H S S S H P0 H S H S S",
    "pi_xy": "P0 H S S H",
}

_SQRT2 = np.sqrt(2.0)
STANDARD_BASIS_OPERATORS: Dict[str, ComplexMatrix] = {
    "id": PAULI_I,
    "sigma_x": PAULI_X,
    "sigma_y": PAULI_Y,
    "sigma_z": PAULI_Z,
    "r_x": (PAULI_I + 1j * PAULI_X) / _SQRT2,
    "r_y": (PAULI_I + 1j * PAULI_Y) / _SQRT2,
    "r_z": (PAULI_I + 1j * PAULI_Z) / _SQRT2,
    "r_yz": (PAULI_Y + PAULI_Z) / _SQRT2,
    "r_zx": (PAULI_Z + PAULI_X) / _SQRT2,
    "r_xy": (PAULI_X + PAULI_Y) / _SQRT2,
    "pi_x": (PAULI_I + PAULI_X) / 2,
    "pi_y": (PAULI_I + PAULI_Y) / 2,
    "pi_z": (PAULI_I + PAULI_Z) / 2,
    "pi_yz": (PAULI_Y + 1j * PAULI_Z) / 2,
    "pi_zx": (PAULI_Z + 1j * PAULI_X) / 2,
    "pi_xy": (PAULI_X + 1j * PAULI_Y) / 2,
}


def basis_circuit(key: str, qubit: int = 0, n_qubits: int = 1) -> Circuit:
    """Circuit executing the standard-basis sequence ``key`` on ``qubit``."""
    try:
        sequence = STANDARD_BASIS_SEQUENCES[key]
    except KeyError as e:
        raise GateError(f"Unknown standard-basis element '{key}'", original_error=e)
    gates = tuple(GateSpec(name, (qubit,)) for name in reversed(sequence.split()))
    return Circuit(n_qubits, gates)


def standard_basis(n_qubits: int, oracle: NoiseOracle) -> List[Labelled]:
    """Noisy standard basis: 16 elements for one qubit, their 256 tensor products for two.

    The identity element is realized as an explicit idle gate so that it
    carries the same noise as any other single-gate operation.
    """
    if n_qubits not in (1, 2):
        raise GateError(f"Standard basis is defined for 1 or 2 qubits, got {n_qubits}")
    single = [(key, oracle(basis_circuit(key))) for key in STANDARD_BASIS_SEQUENCES]
    if n_qubits == 1:
        return single
    log_notice_once(
        "standard-basis-product",
        "Two-qubit standard basis built as tensor products of single-qubit realizations",
    )
    return [
        (f"{high}(x){low}", tensor(high_choi, low_choi))
        for (high, high_choi), (low, low_choi) in product(single, single)
    ]


def pauli_set(circuit: Circuit, oracle: NoiseOracle) -> List[Labelled]:
    """Noisy realizations of ``P ∘ U`` for every Pauli string ``P`` on the circuit's data qubits."""
    labelled = []
    for labels in product("IXYZ", repeat=circuit.n_data):
        # labels[0] is the most significant qubit
        gates = [
            GateSpec(label, (circuit.n_data - 1 - position,))
            for position, label in enumerate(labels)
            if label != "I"
        ]
        label = "".join(labels)
        labelled.append((label, oracle(circuit.then(*gates))))
    return labelled
