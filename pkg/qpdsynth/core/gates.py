"""Gate library and small linear-connectivity circuits.

A gate's local matrix uses ``qubits[0]`` as its most significant factor, so
``GateSpec("CNOT", (1, 0))`` on a two-qubit register is the textbook CNOT
matrix with qubit 1 as control.
"""

from dataclasses import dataclass, field
from functools import reduce
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions.gates import ConnectivityError, GateError
from .channels import PAULI_I, PAULI_X, PAULI_Y, PAULI_Z, ComplexMatrix

MAX_QUBITS = 4

_FIXED: Dict[str, ComplexMatrix] = {
    "I": PAULI_I,
    "X": PAULI_X,
    "Y": PAULI_Y,
    "Z": PAULI_Z,
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "P0": np.array([[1, 0], [0, 0]], dtype=complex),
    "CNOT": np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
    ),
    "SWAP": np.array(
        [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
    ),
}

_ROTATIONS = {"RX": PAULI_X, "RY": PAULI_Y, "RZ": PAULI_Z}

ARITY: Dict[str, int] = {**{name: m.shape[0].bit_length() - 1 for name, m in _FIXED.items()}, "RX": 1, "RY": 1, "RZ": 1}


@dataclass(frozen=True)
class GateSpec:
    name: str
    qubits: Tuple[int, ...]
    angle: Optional[float] = None

    def __post_init__(self) -> None:
        name = self.name.upper()
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if name not in ARITY:
            raise GateError(f"Unknown gate '{self.name}'", details={"known": sorted(ARITY)})
        if len(self.qubits) != ARITY[name]:
            raise GateError(f"Gate {name} acts on {ARITY[name]} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise GateError(f"Gate {name} has repeated qubit indices {self.qubits}")
        if any(q < 0 for q in self.qubits):
            raise GateError(f"Negative qubit index in {self.qubits}")
        if name in _ROTATIONS and self.angle is None:
            raise GateError(f"Rotation {name} requires an angle")

    @property
    def arity(self) -> int:
        return len(self.qubits)

    @property
    def is_trace_preserving(self) -> bool:
        return self.name != "P0"

    def label(self) -> str:
        qubits = ",".join(str(q) for q in self.qubits)
        if self.angle is None:
            return f"{self.name}[{qubits}]"
        return f"{self.name}({self.angle:.17g})[{qubits}]"


def gate_unitary(gate: GateSpec) -> ComplexMatrix:
    """Local matrix of ``gate``: its unitary, or the projector for ``P0``."""
    if gate.name in _ROTATIONS:
        half = 0.5 * float(gate.angle)
        return np.cos(half) * PAULI_I - 1j * np.sin(half) * _ROTATIONS[gate.name]
    try:
        return _FIXED[gate.name].copy()
    except KeyError as e:
        raise GateError(f"Unknown gate '{gate.name}'", original_error=e)


def embed_operator(operator: ComplexMatrix, qubits: Sequence[int], n_qubits: int) -> ComplexMatrix:
    """Lift an operator on ``qubits`` (``qubits[0]`` most significant) to an ``n_qubits`` register."""
    k = len(qubits)
    if operator.shape != (2**k, 2**k):
        raise GateError(f"Operator of shape {operator.shape} does not act on {k} qubit(s)")
    rest = [q for q in reversed(range(n_qubits)) if q not in qubits]
    layout = list(qubits) + rest
    full = np.kron(operator, np.eye(2 ** len(rest), dtype=complex)).reshape([2] * (2 * n_qubits))
    perm = [layout.index(n_qubits - 1 - axis) for axis in range(n_qubits)]
    full = full.transpose(perm + [p + n_qubits for p in perm])
    return full.reshape(2**n_qubits, 2**n_qubits)


@dataclass(frozen=True)
class Circuit:
    """Ordered gate list on ``n_qubits`` qubits with linear connectivity.

    The low ``n_data`` qubits carry the input state; higher qubits are
    ancillas that start in ``|0⟩`` and are traced out by the noise oracle.
    """

    n_qubits: int
    gates: Tuple[GateSpec, ...] = field(default_factory=tuple)
    n_data: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.n_data is None:
            object.__setattr__(self, "n_data", self.n_qubits)
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise GateError(f"Circuits support 1 to {MAX_QUBITS} qubits, got {self.n_qubits}")
        if not 1 <= self.n_data <= self.n_qubits:
            raise GateError(f"Data qubit count {self.n_data} outside 1..{self.n_qubits}")
        for gate in self.gates:
            if max(gate.qubits) >= self.n_qubits:
                raise GateError(f"{gate.label()} addresses a qubit outside a {self.n_qubits}-qubit register")
            if gate.arity == 2 and abs(gate.qubits[0] - gate.qubits[1]) != 1:
                raise ConnectivityError(
                    f"{gate.label()} acts on non-adjacent qubits under linear connectivity"
                )

    @property
    def n_ancilla(self) -> int:
        return self.n_qubits - self.n_data

    @property
    def has_postselection(self) -> bool:
        return any(not gate.is_trace_preserving for gate in self.gates)

    def then(self, *gates: GateSpec) -> "Circuit":
        return Circuit(self.n_qubits, self.gates + tuple(gates), self.n_data)

    def unitary(self) -> ComplexMatrix:
        """Product of the embedded gate matrices on the full register, first gate rightmost."""
        identity = np.eye(2**self.n_qubits, dtype=complex)
        return reduce(
            lambda acc, gate: embed_operator(gate_unitary(gate), gate.qubits, self.n_qubits) @ acc,
            self.gates,
            identity,
        )

    def count(self, name: str) -> int:
        return sum(1 for gate in self.gates if gate.name == name.upper())

    def labels(self) -> List[str]:
        return [gate.label() for gate in self.gates]


def target_circuit(name: str, angle: Optional[float] = None) -> Circuit:
    """Circuit realizing a named target gate on its own register (CNOT control is qubit 1)."""
    key = name.upper()
    if key not in ARITY or key == "P0":
        raise GateError(f"'{name}' is not a supported target gate", details={"known": sorted(set(ARITY) - {"P0"})})
    if ARITY[key] == 1:
        return Circuit(1, (GateSpec(key, (0,), angle),))
    if key == "CNOT":
        return Circuit(2, (GateSpec("CNOT", (1, 0)),))
    return Circuit(2, (GateSpec(key, (1, 0)),))
