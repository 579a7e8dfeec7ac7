"""Sparse Pauli-sum operators on qubit registers.

A Pauli string is stored as a pair of integer bit masks ``(x, z)`` with the
convention ``P(x, z) = prod_q i^(x_q z_q) X_q^x_q Z_q^z_q``, so ``Y = iXZ``.
Only qubits carrying a non-identity letter have a bit set, which keeps the
representation sparse in the number of qubits. Qubit 0 is the least
significant bit of a statevector index.
"""

from __future__ import annotations

from typing import Iterable, Iterator, Mapping

import numpy as np
import scipy.sparse as sp

DROP_TOL = 1e-14

PauliKey = tuple[int, int]

_LETTER_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}


def _popcount(v: int) -> int:
    return bin(v).count("1")


def key_from_letters(letters: Mapping[int, str]) -> PauliKey:
    """Build an ``(x, z)`` key from a ``{qubit: letter}`` map."""
    x = z = 0
    for q, letter in letters.items():
        bx, bz = _LETTER_BITS[letter.upper()]
        x |= bx << q
        z |= bz << q
    return x, z


def letters_from_key(key: PauliKey) -> dict[int, str]:
    """Inverse of :func:`key_from_letters`; identity qubits are omitted."""
    x, z = key
    out = {}
    q = 0
    while (x >> q) or (z >> q):
        bx, bz = (x >> q) & 1, (z >> q) & 1
        if bx and bz:
            out[q] = "Y"
        elif bx:
            out[q] = "X"
        elif bz:
            out[q] = "Z"
        q += 1
    return out


def pauli_label(key: PauliKey, n_qubits: int) -> str:
    """Dense label, qubit 0 first, e.g. ``'XZX'``."""
    letters = letters_from_key(key)
    return "".join(letters.get(q, "I") for q in range(n_qubits))


def multiply_keys(a: PauliKey, b: PauliKey) -> tuple[complex, PauliKey]:
    """Return ``(phase, key)`` with ``P(a) P(b) = phase * P(key)``."""
    x1, z1 = a
    x2, z2 = b
    x3, z3 = x1 ^ x2, z1 ^ z2
    power = _popcount(x1 & z1) + _popcount(x2 & z2) - _popcount(x3 & z3)
    power += 2 * _popcount(z1 & x2)
    return 1j ** (power % 4), (x3, z3)


class PauliHamiltonian:
    """Linear combination of Pauli strings on ``n_qubits`` qubits.

    Identical strings are merged on construction and coefficients with
    modulus below ``1e-14`` are dropped.
    """

    def __init__(self, n_qubits: int, terms: Mapping[PauliKey, complex] | Iterable[tuple[complex, PauliKey]] | None = None):
        self.n_qubits = int(n_qubits)
        merged: dict[PauliKey, complex] = {}
        if terms is not None:
            items = terms.items() if isinstance(terms, Mapping) else ((k, c) for c, k in terms)
            for key, coeff in items:
                if key[0] >> self.n_qubits or key[1] >> self.n_qubits:
                    raise ValueError(f"Pauli string {key} acts outside {self.n_qubits} qubits")
                merged[key] = merged.get(key, 0.0) + complex(coeff)
        self._terms = {k: c for k, c in merged.items() if abs(c) > DROP_TOL}
        self._sparse = None

    # -- container protocol -------------------------------------------------
    @property
    def terms(self) -> list[tuple[complex, PauliKey]]:
        return [(c, k) for k, c in self._terms.items()]

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self) -> Iterator[tuple[complex, PauliKey]]:
        return iter(self.terms)

    def coefficient(self, key: PauliKey) -> complex:
        return self._terms.get(key, 0.0)

    def __repr__(self) -> str:
        return f"PauliHamiltonian(n_qubits={self.n_qubits}, n_terms={len(self)})"

    def __str__(self) -> str:
        lines = [f"{c.real:+.6g}{c.imag:+.6g}j {pauli_label(k, self.n_qubits)}" for c, k in self.terms]
        return "\n".join(lines)

    # -- algebra ------------------------------------------------------------
    @classmethod
    def identity(cls, n_qubits: int, coeff: complex = 1.0) -> "PauliHamiltonian":
        return cls(n_qubits, {(0, 0): coeff})

    def __add__(self, other: "PauliHamiltonian") -> "PauliHamiltonian":
        if other.n_qubits != self.n_qubits:
            raise ValueError("qubit count mismatch")
        merged = dict(self._terms)
        for k, c in other._terms.items():
            merged[k] = merged.get(k, 0.0) + c
        return PauliHamiltonian(self.n_qubits, merged)

    def __sub__(self, other: "PauliHamiltonian") -> "PauliHamiltonian":
        return self + (-1.0) * other

    def __rmul__(self, scalar: complex) -> "PauliHamiltonian":
        return PauliHamiltonian(self.n_qubits, {k: scalar * c for k, c in self._terms.items()})

    def __mul__(self, other):
        if not isinstance(other, PauliHamiltonian):
            return other * self
        if other.n_qubits != self.n_qubits:
            raise ValueError("qubit count mismatch")
        out: dict[PauliKey, complex] = {}
        for k1, c1 in self._terms.items():
            for k2, c2 in other._terms.items():
                phase, k3 = multiply_keys(k1, k2)
                out[k3] = out.get(k3, 0.0) + phase * c1 * c2
        return PauliHamiltonian(self.n_qubits, out)

    def adjoint(self) -> "PauliHamiltonian":
        # Pauli strings are Hermitian in this convention
        return PauliHamiltonian(self.n_qubits, {k: np.conj(c) for k, c in self._terms.items()})

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return all(abs(c.imag) <= tol for c in self._terms.values())

    def support(self) -> list[int]:
        mask = 0
        for x, z in self._terms:
            mask |= x | z
        return [q for q in range(self.n_qubits) if (mask >> q) & 1]

    # -- matrix forms -------------------------------------------------------
    def _term_columns(self, x: int, z: int, idx: np.ndarray) -> np.ndarray:
        signs = 1.0 - 2.0 * (np.bitwise_count(idx & np.uint64(z)) & 1)
        return (1j ** (_popcount(x & z) % 4)) * signs

    def to_sparse(self) -> sp.csr_matrix:
        """Sparse matrix in the little-endian computational basis (cached)."""
        if self._sparse is None:
            dim = 1 << self.n_qubits
            idx = np.arange(dim, dtype=np.uint64)
            rows, cols, vals = [], [], []
            for (x, z), c in self._terms.items():
                rows.append((idx ^ np.uint64(x)).astype(np.int64))
                cols.append(idx.astype(np.int64))
                vals.append(c * self._term_columns(x, z, idx))
            if rows:
                mat = sp.coo_matrix(
                    (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                    shape=(dim, dim),
                ).tocsr()
            else:
                mat = sp.csr_matrix((dim, dim), dtype=complex)
            mat.sum_duplicates()
            mat.eliminate_zeros()
            self._sparse = mat
        return self._sparse

    def to_dense(self) -> np.ndarray:
        if self.n_qubits > 14:
            raise ValueError(f"refusing dense {self.n_qubits}-qubit matrix")
        return self.to_sparse().toarray()

    def apply(self, vec: np.ndarray) -> np.ndarray:
        return self.to_sparse() @ vec

    def expectation(self, vec: np.ndarray) -> complex:
        return np.vdot(vec, self.apply(vec))

    def restricted_matrix(self, qubits: list[int]) -> np.ndarray:
        """Dense matrix of the operator on ``qubits`` (local bit t = ``qubits[t]``).

        Every term must act trivially outside ``qubits``.
        """
        k = len(qubits)
        pos = {q: t for t, q in enumerate(qubits)}
        local: dict[PauliKey, complex] = {}
        for (x, z), c in self._terms.items():
            lx = lz = 0
            for q in range(self.n_qubits):
                bx, bz = (x >> q) & 1, (z >> q) & 1
                if not (bx or bz):
                    continue
                if q not in pos:
                    raise ValueError(f"term acts on qubit {q} outside {qubits}")
                lx |= bx << pos[q]
                lz |= bz << pos[q]
            local[(lx, lz)] = local.get((lx, lz), 0.0) + c
        return PauliHamiltonian(k, local).to_dense()
