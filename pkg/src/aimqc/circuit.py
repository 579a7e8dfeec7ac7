"""Gate lists, dense gate kernels and the circuit text format.

Gate matrices use the same little-endian convention as statevectors: for a
gate on qubits ``(q_0, ..., q_{k-1})`` the local index is
``sum_t bit(q_t) 2^t``. Rotations are ``R_a(theta) = exp(-i theta a / 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

KINDS = ("U", "RX", "RY", "RZ", "CNOT")

CNOT_MATRIX = np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex)


def rotation(axis: str, theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    if axis == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if axis == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if axis == "RZ":
        return np.array([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]], dtype=complex)
    raise ValueError(f"unknown rotation {axis}")


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple
    matrix: Optional[np.ndarray] = None
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown gate kind {self.kind}")
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError("repeated qubit in gate")
        if self.kind == "U":
            m = np.asarray(self.matrix, dtype=complex)
            if m.shape != (2 ** len(self.qubits),) * 2:
                raise ValueError("unitary block has the wrong shape")
            if not np.allclose(m.conj().T @ m, np.eye(m.shape[0]), atol=1e-10):
                raise ValueError("unitary block is not unitary")
            object.__setattr__(self, "matrix", m)
        elif self.kind == "CNOT":
            if len(self.qubits) != 2:
                raise ValueError("CNOT needs control and target")
        elif len(self.qubits) != 1:
            raise ValueError("rotations act on one qubit")

    @classmethod
    def unitary(cls, qubits: Sequence[int], matrix: np.ndarray) -> "Gate":
        return cls("U", tuple(qubits), matrix)

    @classmethod
    def cnot(cls, control: int, target: int) -> "Gate":
        return cls("CNOT", (control, target))

    @classmethod
    def rot(cls, axis: str, qubit: int, theta: float) -> "Gate":
        return cls(axis, (qubit,), angle=float(theta))

    def to_matrix(self) -> np.ndarray:
        if self.kind == "U":
            return self.matrix
        if self.kind == "CNOT":
            return CNOT_MATRIX
        return rotation(self.kind, self.angle)

    def shifted(self, offset: int) -> "Gate":
        return Gate(self.kind, tuple(q + offset for q in self.qubits), self.matrix, self.angle)

    def remapped(self, mapping: Sequence[int]) -> "Gate":
        return Gate(self.kind, tuple(mapping[q] for q in self.qubits), self.matrix, self.angle)


def apply_matrix(vec: np.ndarray, mat: np.ndarray, qubits: Sequence[int], n_qubits: int) -> np.ndarray:
    """Return ``mat`` applied to ``qubits`` of a little-endian statevector."""
    k = len(qubits)
    psi = vec.reshape((2,) * n_qubits)
    axes = [n_qubits - 1 - q for q in reversed(qubits)]
    g = np.asarray(mat).reshape((2,) * (2 * k))
    out = np.tensordot(g, psi, axes=(list(range(k, 2 * k)), axes))
    return np.moveaxis(out, list(range(k)), axes).reshape(-1)


class Circuit:
    """Ordered gate list applied left to right to ``|0...0>``."""

    def __init__(self, n_qubits: int, gates: Iterable[Gate] = ()):
        self.n_qubits = int(n_qubits)
        self.gates: list[Gate] = []
        for g in gates:
            self.append(g)

    def append(self, gate: Gate) -> None:
        if max(gate.qubits) >= self.n_qubits or min(gate.qubits) < 0:
            raise ValueError(f"gate on {gate.qubits} outside {self.n_qubits} qubits")
        self.gates.append(gate)

    def extend(self, gates: Iterable[Gate]) -> None:
        for g in gates:
            self.append(g)

    def __len__(self) -> int:
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def __repr__(self) -> str:
        return f"Circuit(n_qubits={self.n_qubits}, gates={len(self.gates)}, cnots={self.cnot_count()})"

    def inverse(self) -> "Circuit":
        inv = []
        for g in reversed(self.gates):
            if g.kind == "U":
                inv.append(Gate.unitary(g.qubits, g.matrix.conj().T))
            elif g.kind == "CNOT":
                inv.append(g)
            else:
                inv.append(Gate.rot(g.kind, g.qubits[0], -g.angle))
        return Circuit(self.n_qubits, inv)

    def cnot_count(self) -> int:
        """CNOTs actually present (unitary blocks count as zero)."""
        return sum(g.kind == "CNOT" for g in self.gates)

    def estimated_cnot_count(self) -> int:
        """CNOTs with every unitary block priced by the optimised QSD formula."""
        from .qsd import cnot_count_optimized_qsd

        total = 0
        for g in self.gates:
            if g.kind == "CNOT":
                total += 1
            elif g.kind == "U" and len(g.qubits) >= 2:
                total += cnot_count_optimized_qsd(len(g.qubits))
        return total

    def cnot_depth(self) -> int:
        """Non-parallel CNOT layers (ASAP schedule; blocks priced by the formula)."""
        from .qsd import cnot_count_optimized_qsd

        level = [0] * self.n_qubits
        for g in self.gates:
            if g.kind == "CNOT":
                cost = 1
            elif g.kind == "U" and len(g.qubits) >= 2:
                cost = cnot_count_optimized_qsd(len(g.qubits))
            else:
                continue
            start = max(level[q] for q in g.qubits)
            for q in g.qubits:
                level[q] = start + cost
        return max(level, default=0)

    def state(self, initial: Optional[np.ndarray] = None) -> np.ndarray:
        vec = np.zeros(2 ** self.n_qubits, dtype=complex)
        if initial is None:
            vec[0] = 1.0
        else:
            vec[:] = initial
        for g in self.gates:
            vec = apply_matrix(vec, g.to_matrix(), g.qubits, self.n_qubits)
        return vec

    def unitary(self, limit: int = 12) -> np.ndarray:
        if self.n_qubits > limit:
            raise ValueError("circuit too large for a dense unitary")
        dim = 2 ** self.n_qubits
        mat = np.eye(dim, dtype=complex)
        cols = [mat[:, j] for j in range(dim)]
        for g in self.gates:
            m = g.to_matrix()
            cols = [apply_matrix(c, m, g.qubits, self.n_qubits) for c in cols]
        return np.column_stack(cols)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_circuit(path, circuit: Circuit) -> None:
    """Text format: a ``QUBITS n`` header, then one gate per line.

    ``RX q theta`` / ``RY q theta`` / ``RZ q theta`` / ``CNOT c t`` /
    ``U k q0 .. q_{k-1}`` followed by ``2^k`` continuation lines, each a
    matrix row of space-separated ``re im`` pairs. Numbers carry 17
    significant digits so that a round trip is bit exact.
    """
    with open(path, "w") as fh:
        fh.write(f"QUBITS {circuit.n_qubits}\n")
        for g in circuit.gates:
            if g.kind == "CNOT":
                fh.write(f"CNOT {g.qubits[0]} {g.qubits[1]}\n")
            elif g.kind == "U":
                fh.write(f"U {len(g.qubits)} " + " ".join(map(str, g.qubits)) + "\n")
                for row in g.matrix:
                    fh.write(" ".join(f"{_fmt(v.real)} {_fmt(v.imag)}" for v in row) + "\n")
            else:
                fh.write(f"{g.kind} {g.qubits[0]} {_fmt(g.angle)}\n")


def read_circuit(path) -> Circuit:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or not lines[0].startswith("QUBITS"):
        raise ValueError("circuit file must start with 'QUBITS n'")
    circuit = Circuit(int(lines[0].split()[1]))
    i = 1
    while i < len(lines):
        tok = lines[i].split()
        kind = tok[0]
        if kind == "CNOT":
            circuit.append(Gate.cnot(int(tok[1]), int(tok[2])))
        elif kind in ("RX", "RY", "RZ"):
            circuit.append(Gate.rot(kind, int(tok[1]), float(tok[2])))
        elif kind == "U":
            k = int(tok[1])
            qubits = [int(q) for q in tok[2:2 + k]]
            rows = []
            for r in range(2 ** k):
                vals = np.array(lines[i + 1 + r].split(), dtype=float)
                rows.append(vals[0::2] + 1j * vals[1::2])
            circuit.append(Gate.unitary(qubits, np.array(rows)))
            i += 2 ** k
        else:
            raise ValueError(f"unknown gate line: {lines[i]}")
        i += 1
    return circuit
