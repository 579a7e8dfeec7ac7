"""Statevector emulation: circuits, fermionic ladder operators and the
symmetric Trotter propagator.

One propagator step is ``[e^{-i Hint tau/2} e^{-i H0 tau} e^{-i Hint tau/2}]^{n_T}``
with ``tau = dt / n_T``. The quadratic factor is exact: ``exp(-i h0 tau)``
is factorised into nearest-neighbour Givens rotations and a diagonal phase
layer, each of which maps to a number-conserving gate on the qubits.
``Hint`` only touches impurity orbitals, so its exponential is one dense
gate on those qubits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .circuit import Circuit, apply_matrix
from .model import HamiltonianSplit
from .pauli import PauliHamiltonian

DENSE_LIMIT = 24


class Statevector:
    """Little-endian amplitudes: index ``sum_q bit_q 2^q``."""

    def __init__(self, amplitudes: np.ndarray):
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        n = int(round(np.log2(amps.size)))
        if 2 ** n != amps.size:
            raise ValueError("length must be a power of two")
        self.amplitudes = amps
        self.n_qubits = n

    @classmethod
    def zero(cls, n_qubits: int) -> "Statevector":
        if n_qubits > DENSE_LIMIT:
            raise ValueError(f"{n_qubits} qubits exceeds the dense limit of {DENSE_LIMIT}")
        amps = np.zeros(2 ** n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(amps)

    def copy(self) -> "Statevector":
        return Statevector(self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def __repr__(self) -> str:
        return f"Statevector(n_qubits={self.n_qubits}, norm={self.norm():.6g})"


def _check(n_a: int, n_b: int) -> None:
    if n_a != n_b:
        raise ValueError(f"qubit counts differ ({n_a} vs {n_b})")


def apply_circuit(circuit: Circuit, state: Statevector) -> Statevector:
    _check(circuit.n_qubits, state.n_qubits)
    vec = state.amplitudes
    for g in circuit.gates:
        vec = apply_matrix(vec, g.to_matrix(), g.qubits, state.n_qubits)
    return Statevector(vec)


def apply_ladder(alpha: int, dagger: bool, state: Statevector) -> Statevector:
    """``c^dag_alpha |s>`` or ``c_alpha |s>`` with Jordan-Wigner signs."""
    n = state.n_qubits
    if not 0 <= alpha < n:
        raise ValueError(f"orbital {alpha} outside {n} qubits")
    idx = np.arange(2 ** n, dtype=np.int64)
    occupied = ((idx >> alpha) & 1).astype(bool)
    parity = np.bitwise_count(idx & ((1 << alpha) - 1)).astype(np.int64) & 1
    sign = 1.0 - 2.0 * parity
    out = np.zeros_like(state.amplitudes)
    src = ~occupied if dagger else occupied
    out[idx[src] ^ (1 << alpha)] = sign[src] * state.amplitudes[src]
    return Statevector(out)


def expectation(h: PauliHamiltonian, state: Statevector) -> float:
    _check(h.n_qubits, state.n_qubits)
    val = h.expectation(state.amplitudes)
    return float(val.real)


def overlap(a: Statevector, b: Statevector) -> complex:
    _check(a.n_qubits, b.n_qubits)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


# -- quadratic evolution ----------------------------------------------------------------

def givens_decomposition(u: np.ndarray) -> tuple[list[tuple[int, np.ndarray]], np.ndarray]:
    """Factor a unitary as ``u = G_1^dag .. G_K^dag diag(d)``.

    Each ``G_k = (p, g)`` acts on rows ``p, p+1`` with a 2x2 unitary ``g``;
    the list is returned in elimination order ``G_1 .. G_K``.
    """
    m = np.array(u, dtype=complex)
    dim = m.shape[0]
    rotations = []
    for j in range(dim - 1):
        for i in range(dim - 1, j, -1):
            a, b = m[i - 1, j], m[i, j]
            if abs(b) < 1e-15:
                continue
            r = np.hypot(abs(a), abs(b))
            g = np.array([[np.conj(a), np.conj(b)], [-b, a]]) / r
            m[[i - 1, i], :] = g @ m[[i - 1, i], :]
            rotations.append((i - 1, g))
    return rotations, np.diag(m).copy()


def mode_rotation_gate(g: np.ndarray) -> np.ndarray:
    """Many-body gate on two adjacent modes for the single-particle unitary ``g``."""
    gate = np.zeros((4, 4), dtype=complex)
    gate[0, 0] = 1.0
    gate[1:3, 1:3] = g
    gate[3, 3] = np.linalg.det(g)
    return gate


@dataclass
class QuadraticEvolution:
    """``exp(-i H0 t)`` for a fixed ``t`` as a Givens network."""

    gates: list  # (first qubit, 4x4 gate) in application order
    phases: np.ndarray  # single-mode phase applied first

    @classmethod
    def build(cls, h0: np.ndarray, t: float) -> "QuadraticEvolution":
        u = scipy.linalg.expm(-1j * t * np.asarray(h0, dtype=complex))
        rotations, d = givens_decomposition(u)
        gates = [(p, mode_rotation_gate(g.conj().T)) for p, g in reversed(rotations)]
        return cls(gates, d)

    def apply(self, vec: np.ndarray, n_qubits: int) -> np.ndarray:
        idx = np.arange(2 ** n_qubits, dtype=np.int64)
        phase = np.ones(2 ** n_qubits, dtype=complex)
        for p, d in enumerate(self.phases):
            phase *= np.where((idx >> p) & 1, d, 1.0)
        vec = vec * phase
        for p, gate in self.gates:
            vec = apply_matrix(vec, gate, (p, p + 1), n_qubits)
        return vec


class TrotterPropagator:
    """``U(dt)`` built from a :class:`~aimqc.model.HamiltonianSplit`.

    ``mode="trotter"`` is the symmetric splitting with exact quadratic part;
    ``mode="exact"`` exponentiates the full Hamiltonian densely and is meant
    for cross-checks on small systems.
    """

    def __init__(self, split: HamiltonianSplit, dt: float, n_T: int = 1, mode: str = "trotter"):
        if dt <= 0:
            raise ValueError("dt must be positive")
        if n_T < 1:
            raise ValueError("n_T must be >= 1")
        self.split = split
        self.dt = float(dt)
        self.n_T = int(n_T)
        self.mode = mode
        self.n_qubits = split.h0_single_particle.shape[0]
        tau = self.dt / self.n_T
        if mode == "trotter":
            h0 = split.h0_single_particle
            self._quad = {+1: QuadraticEvolution.build(h0, tau), -1: QuadraticEvolution.build(h0, -tau)}
            self._hint_qubits = list(split.impurity_orbitals)
            hint = split.hint_pauli()
            if len(hint) and self._hint_qubits:
                mat = hint.restricted_matrix(self._hint_qubits)
                w, v = np.linalg.eigh(mat)
                self._hint = {
                    (s, f): (v * np.exp(-1j * s * f * tau * w)) @ v.conj().T
                    for s in (+1, -1) for f in (0.5, 1.0)
                }
            else:
                self._hint = None
        elif mode == "exact":
            if self.n_qubits > 14:
                raise ValueError("dense exact propagator limited to 14 qubits")
            ham = split.h0_pauli() + split.hint_pauli()
            w, v = np.linalg.eigh(ham.to_dense())
            self._dense = {s: (v * np.exp(-1j * s * self.dt * w)) @ v.conj().T for s in (+1, -1)}
        else:
            raise ValueError(f"unknown propagator mode {mode}")

    def _hint_apply(self, vec, sign, frac):
        if self._hint is None:
            return vec
        return apply_matrix(vec, self._hint[(sign, frac)], self._hint_qubits, self.n_qubits)

    def apply_vector(self, vec: np.ndarray, steps: int = 1, inverse: bool = False) -> np.ndarray:
        sign = -1 if inverse else +1
        if self.mode == "exact":
            for _ in range(steps):
                vec = self._dense[sign] @ vec
            return vec
        quad = self._quad[sign]
        for _ in range(steps):
            vec = self._hint_apply(vec, sign, 0.5)
            for sub in range(self.n_T):
                vec = quad.apply(vec, self.n_qubits)
                vec = self._hint_apply(vec, sign, 1.0 if sub < self.n_T - 1 else 0.5)
        return vec

    def apply(self, state: Statevector, steps: int = 1, inverse: bool = False) -> Statevector:
        _check(self.n_qubits, state.n_qubits)
        return Statevector(self.apply_vector(state.amplitudes, steps, inverse))

    def matrix(self) -> np.ndarray:
        """Dense ``U(dt)`` (small systems only)."""
        if self.n_qubits > 12:
            raise ValueError("dense propagator matrix limited to 12 qubits")
        eye = np.eye(2 ** self.n_qubits, dtype=complex)
        return np.column_stack([self.apply_vector(eye[:, j]) for j in range(eye.shape[0])])


def make_propagator(split: HamiltonianSplit, dt: float, n_T: int = 1, mode: str = "trotter") -> TrotterPropagator:
    return TrotterPropagator(split, dt, n_T, mode)


# -- dumps ------------------------------------------------------------------------------

def write_statevector(path, state: Statevector) -> None:
    """Raw little-endian complex128 amplitudes, index ``sum_q bit_q 2^q``."""
    with open(path, "wb") as fh:
        fh.write(np.ascontiguousarray(state.amplitudes, dtype="<c16").tobytes())


def read_statevector(path) -> Statevector:
    return Statevector(np.fromfile(path, dtype="<c16").astype(complex))
