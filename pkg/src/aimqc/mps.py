"""Matrix product states and operators for qubit chains.

Site ``i`` of an :class:`Mps` is qubit ``i``; site tensors have index order
``(left bond, physical, right bond)`` and physical index 0/1 is the qubit
value. Dense vectors use the little-endian convention of the rest of the
package (qubit 0 is the least significant bit).
"""

from __future__ import annotations

import struct
from typing import Optional, Sequence

import numpy as np

from .pauli import PauliHamiltonian, letters_from_key

DENSE_LIMIT = 20

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _svd(mat: np.ndarray):
    try:
        return np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError:
        import scipy.linalg

        return scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesvd")


def truncation_rank(s: np.ndarray, chi_max: Optional[int], cutoff: float = 0.0) -> int:
    """Number of singular values kept; drops smallest first, at least one."""
    keep = len(s)
    if cutoff > 0 and len(s) and s[0] > 0:
        keep = int(np.count_nonzero(s > cutoff * s[0]))
    if chi_max is not None:
        keep = min(keep, chi_max)
    return max(keep, 1)


class Mps:
    """Open-boundary MPS.

    ``canonical_center`` is the site all other tensors are isometries
    towards (left of it left-isometric, right of it right-isometric), or
    ``None`` if no gauge is known.
    """

    def __init__(self, tensors: Sequence[np.ndarray], canonical_center: Optional[int] = None):
        self.tensors = [np.asarray(t, dtype=complex) for t in tensors]
        if not self.tensors:
            raise ValueError("an MPS needs at least one site")
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[2] != 1:
            raise ValueError("boundary bonds must have dimension 1")
        for a, b in zip(self.tensors[:-1], self.tensors[1:]):
            if a.shape[2] != b.shape[0]:
                raise ValueError("bond dimensions of neighbouring tensors disagree")
        self.canonical_center = canonical_center

    # -- constructors -----------------------------------------------------------
    @classmethod
    def product_state(cls, bits: Sequence[int]) -> "Mps":
        tensors = []
        for b in bits:
            t = np.zeros((1, 2, 1), dtype=complex)
            t[0, int(b), 0] = 1.0
            tensors.append(t)
        return cls(tensors, 0)

    @classmethod
    def from_local_states(cls, vectors: Sequence[np.ndarray]) -> "Mps":
        tensors = [np.asarray(v, dtype=complex).reshape(1, 2, 1) for v in vectors]
        return cls(tensors, None)

    @classmethod
    def random(cls, n_sites: int, chi: int, seed=None, real: bool = False) -> "Mps":
        """Normalised random MPS with bonds ``min(chi, 2^i, 2^(N-i))``."""
        rng = np.random.default_rng(seed)
        dims = [1] + [min(chi, 2 ** i, 2 ** (n_sites - i)) for i in range(1, n_sites)] + [1]
        tensors = []
        for i in range(n_sites):
            shape = (dims[i], 2, dims[i + 1])
            t = rng.normal(size=shape)
            if not real:
                t = t + 1j * rng.normal(size=shape)
            tensors.append(t)
        psi = cls(tensors)
        return psi.canonicalize(0).normalized()

    @classmethod
    def from_statevector(cls, vec: np.ndarray, chi_max: Optional[int] = None, cutoff: float = 0.0) -> "Mps":
        """Left-canonical MPS by successive SVDs (centre on the last site)."""
        vec = np.asarray(vec, dtype=complex)
        n = int(round(np.log2(vec.size)))
        if 2 ** n != vec.size:
            raise ValueError("statevector length must be a power of two")
        # psi[s0, s1, ..., s_{N-1}] with s0 = least significant bit
        rest = vec.reshape((2,) * n).transpose(range(n - 1, -1, -1)).reshape(1, -1)
        tensors = []
        for i in range(n - 1):
            chi_l = rest.shape[0]
            mat = rest.reshape(chi_l * 2, -1)
            u, s, vh = _svd(mat)
            k = truncation_rank(s, chi_max, cutoff)
            tensors.append(u[:, :k].reshape(chi_l, 2, k))
            rest = s[:k, None] * vh[:k]
        tensors.append(rest.reshape(rest.shape[0], 2, 1))
        return cls(tensors, n - 1)

    # -- basic properties ---------------------------------------------------------
    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        """Internal bond dimensions ``chi_1 .. chi_{N-1}``."""
        return [t.shape[2] for t in self.tensors[:-1]]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims, default=1)

    def copy(self) -> "Mps":
        return Mps([t.copy() for t in self.tensors], self.canonical_center)

    def __repr__(self) -> str:
        return f"Mps(n_sites={self.n_sites}, bond_dims={self.bond_dims}, center={self.canonical_center})"

    # -- gauge ----------------------------------------------------------------------
    def canonicalize(self, center: int) -> "Mps":
        """Mixed-canonical copy with orthogonality centre ``center``."""
        if not 0 <= center < self.n_sites:
            raise ValueError("centre out of range")
        ts = [t.copy() for t in self.tensors]
        for i in range(center):
            chi_l, d, chi_r = ts[i].shape
            q, r = np.linalg.qr(ts[i].reshape(chi_l * d, chi_r))
            ts[i] = q.reshape(chi_l, d, q.shape[1])
            ts[i + 1] = np.tensordot(r, ts[i + 1], axes=(1, 0))
        for i in range(self.n_sites - 1, center, -1):
            chi_l, d, chi_r = ts[i].shape
            q, r = np.linalg.qr(ts[i].reshape(chi_l, d * chi_r).T)
            ts[i] = q.T.reshape(q.shape[1], d, chi_r)
            ts[i - 1] = np.tensordot(ts[i - 1], r.T, axes=(2, 0))
        return Mps(ts, center)

    def norm(self) -> float:
        if self.canonical_center is not None:
            return float(np.linalg.norm(self.tensors[self.canonical_center]))
        return float(np.sqrt(abs(inner(self, self))))

    def normalized(self) -> "Mps":
        out = self.copy()
        nrm = self.norm()
        if nrm == 0:
            raise ValueError("cannot normalise the zero state")
        site = out.canonical_center if out.canonical_center is not None else 0
        out.tensors[site] = out.tensors[site] / nrm
        return out

    def is_canonical(self, tol: float = 1e-10) -> bool:
        c = self.canonical_center
        if c is None:
            return False
        for i, t in enumerate(self.tensors):
            if i < c:
                m = t.reshape(-1, t.shape[2])
                if not np.allclose(m.conj().T @ m, np.eye(m.shape[1]), atol=tol):
                    return False
            elif i > c:
                m = t.reshape(t.shape[0], -1)
                if not np.allclose(m @ m.conj().T, np.eye(m.shape[0]), atol=tol):
                    return False
        return True

    # -- dense bridge ---------------------------------------------------------------
    def to_statevector(self, limit: int = DENSE_LIMIT) -> np.ndarray:
        if self.n_sites > limit:
            raise ValueError(f"{self.n_sites} qubits exceeds the dense limit of {limit}")
        psi = self.tensors[0].reshape(2, -1)
        for t in self.tensors[1:]:
            psi = np.tensordot(psi, t, axes=(psi.ndim - 1, 0))
            psi = psi.reshape(-1, t.shape[2])
        n = self.n_sites
        psi = psi.reshape((2,) * n)
        return psi.transpose(range(n - 1, -1, -1)).reshape(-1)


def inner(a: Mps, b: Mps) -> complex:
    """``<a|b>`` by a left-to-right transfer-matrix contraction."""
    if a.n_sites != b.n_sites:
        raise ValueError("MPS sizes differ")
    env = np.ones((1, 1), dtype=complex)
    for ta, tb in zip(a.tensors, b.tensors):
        env = np.tensordot(env, tb, axes=(1, 0))
        env = np.tensordot(ta.conj(), env, axes=([0, 1], [0, 1]))
    return complex(env[0, 0])


def fidelity(a: Mps, b: Mps) -> float:
    """``|<a|b>|^2`` for normalised states."""
    return abs(inner(a, b)) ** 2


def truncate(state: Mps, chi_max: int, fidelity_sweeps: int = 2, tol: float = 1e-13) -> tuple[Mps, float]:
    """Compress to bonds ``<= chi_max`` and return ``(mps, fidelity)``.

    Starts from the sequential SVD truncation of the right-canonical form
    and then improves it with single-site sweeps that maximise the overlap
    with the input; each local update can only raise the fidelity.
    """
    if chi_max < 1:
        raise ValueError("chi_max must be >= 1")
    ref = state.canonicalize(0).normalized()
    if ref.max_bond <= chi_max:
        return ref, 1.0
    ts = [t.copy() for t in ref.tensors]
    for i in range(ref.n_sites - 1):
        chi_l, d, chi_r = ts[i].shape
        u, s, vh = _svd(ts[i].reshape(chi_l * d, chi_r))
        k = truncation_rank(s, chi_max)
        ts[i] = u[:, :k].reshape(chi_l, d, k)
        ts[i + 1] = np.tensordot(s[:k, None] * vh[:k], ts[i + 1], axes=(1, 0))
    trial = Mps(ts, ref.n_sites - 1).normalized()
    fid = fidelity(trial, ref)
    for _ in range(fidelity_sweeps):
        trial, new = _overlap_sweeps(trial, ref)
        converged = new - fid < tol
        fid = max(fid, new)
        if converged:
            break
    return trial, min(fid, 1.0)


def _overlap_sweeps(trial: Mps, ref: Mps) -> tuple[Mps, float]:
    """One right-to-left plus left-to-right single-site fitting sweep.

    ``trial`` must be centred on the last site. Returns the trial centred on
    the last site again and its fidelity with ``ref``.
    """
    n = trial.n_sites
    ts = [t.copy() for t in trial.tensors]
    # left environments <trial|ref> up to each site, with trial left-canonical
    left = [np.ones((1, 1), dtype=complex)]
    for i in range(n - 1):
        left.append(_grow_left(left[-1], ts[i], ref.tensors[i]))
    right = [None] * n
    right[n - 1] = np.ones((1, 1), dtype=complex)
    overlap = 0.0
    for i in range(n - 1, -1, -1):
        m = _site_projection(left[i], ref.tensors[i], right[i])
        overlap = np.linalg.norm(m)
        if i == 0:
            ts[0] = m / overlap
            break
        chi_l, d, chi_r = m.shape
        q, r = np.linalg.qr(m.reshape(chi_l, d * chi_r).T)
        ts[i] = q.T.reshape(q.shape[1], d, chi_r)
        right[i - 1] = _grow_right(right[i], ts[i], ref.tensors[i])
    left = [np.ones((1, 1), dtype=complex)]
    for i in range(n):
        m = _site_projection(left[i], ref.tensors[i], right[i])
        overlap = np.linalg.norm(m)
        if i == n - 1:
            ts[i] = m / overlap
            break
        chi_l, d, chi_r = m.shape
        q, r = np.linalg.qr(m.reshape(chi_l * d, chi_r))
        ts[i] = q.reshape(chi_l, d, q.shape[1])
        left.append(_grow_left(left[i], ts[i], ref.tensors[i]))
    return Mps(ts, n - 1), float(overlap ** 2)


def _grow_left(env, bra, ket):
    env = np.tensordot(env, ket, axes=(1, 0))
    return np.tensordot(bra.conj(), env, axes=([0, 1], [0, 1]))


def _grow_right(env, bra, ket):
    env = np.tensordot(ket, env, axes=(2, 1))
    return np.tensordot(bra.conj(), env, axes=([1, 2], [1, 2]))


def _site_projection(left, ket, right):
    # optimal (unnormalised) trial tensor: conj of d<trial|ref>/d conj(trial)
    t = np.tensordot(left, ket, axes=(1, 0))
    return np.tensordot(t, right, axes=(2, 1))


# -- gates on an MPS ----------------------------------------------------------------------

def apply_gate(state: Mps, gate: np.ndarray, first: int, chi_max: Optional[int] = None,
               cutoff: float = 1e-14) -> Mps:
    """Apply a gate on contiguous sites ``first .. first+k-1``.

    Gate matrices use the little-endian convention: row index
    ``sum_t s_t 2^t`` over the gate's local qubits. The result keeps the
    centre on the last touched site.
    """
    gate = np.asarray(gate, dtype=complex)
    k = int(round(np.log2(gate.shape[0])))
    last = first + k - 1
    if first < 0 or last >= state.n_sites:
        raise ValueError("gate acts outside the chain")
    psi = state.canonicalize(first) if state.canonical_center not in range(first, last + 1) else state
    if psi.canonical_center != first:
        psi = psi.canonicalize(first)
    ts = [t.copy() for t in psi.tensors]
    block = ts[first]
    for i in range(first + 1, last + 1):
        block = np.tensordot(block, ts[i], axes=(block.ndim - 1, 0))
    chi_l, chi_r = block.shape[0], block.shape[-1]
    # gate as tensor g[out_{k-1} .. out_0, in_{k-1} .. in_0]; block axes are s_first .. s_last
    g = gate.reshape((2,) * (2 * k))
    perm_out = list(range(k - 1, -1, -1))
    perm_in = [k + p for p in perm_out]
    g = g.transpose(perm_out + perm_in)  # now g[out_0..out_{k-1}, in_0..in_{k-1}]
    block = np.tensordot(g, block, axes=(list(range(k, 2 * k)), list(range(1, k + 1))))
    block = np.moveaxis(block, k, 0)  # (chi_l, s_first.., s_last, chi_r)
    new = []
    rest = block.reshape(chi_l, -1)
    for i in range(first, last):
        cl = rest.shape[0]
        u, s, vh = _svd(rest.reshape(cl * 2, -1))
        r = truncation_rank(s, chi_max, cutoff)
        new.append(u[:, :r].reshape(cl, 2, r))
        rest = s[:r, None] * vh[:r]
    new.append(rest.reshape(rest.shape[0], 2, chi_r))
    ts[first:last + 1] = new
    return Mps(ts, last)


def apply_single(state: Mps, gate: np.ndarray, site: int) -> Mps:
    out = state.copy()
    out.tensors[site] = np.einsum("st,atb->asb", np.asarray(gate, dtype=complex), out.tensors[site])
    return out


# -- matrix product operators -----------------------------------------------------------

class Mpo:
    """MPO with site tensors ``(left, out, in, right)``."""

    def __init__(self, tensors: Sequence[np.ndarray]):
        self.tensors = [np.asarray(t, dtype=complex) for t in tensors]
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[3] != 1:
            raise ValueError("boundary bonds must have dimension 1")

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[3] for t in self.tensors[:-1]]

    def __repr__(self) -> str:
        return f"Mpo(n_sites={self.n_sites}, bond_dims={self.bond_dims})"

    @classmethod
    def from_pauli(cls, ham: PauliHamiltonian, compress: bool = True, tol: float = 1e-13) -> "Mpo":
        """Finite-state-machine MPO of a Pauli sum.

        Bond states are the distinct non-trivial prefixes of the strings
        (plus a "not started" and a "finished" state); the coefficient is
        attached where a string ends. An optional SVD sweep removes
        redundant states.
        """
        n = ham.n_qubits
        words = []
        for c, key in ham.terms:
            letters = letters_from_key(key)
            word = tuple(letters.get(q, "I") for q in range(n))
            last = max(letters) if letters else 0
            words.append((c, word, last))
        # state label at bond i (after site i): "start", "done", or a prefix tuple
        bond_states: list[dict] = []
        for i in range(n - 1):
            states = {"start": 0, "done": 1}
            for _, word, last in words:
                if last > i and any(l != "I" for l in word[: i + 1]):
                    states.setdefault(word[: i + 1], len(states))
            bond_states.append(states)
        tensors = []
        for i in range(n):
            left = bond_states[i - 1] if i > 0 else {"start": 0}
            right = bond_states[i] if i < n - 1 else {"done": 0}
            w = np.zeros((len(left), 2, 2, len(right)), dtype=complex)
            eye = PAULI_MATRICES["I"]
            if i < n - 1:
                w[left["start"], :, :, right["start"]] = eye
                if i > 0:
                    w[left["done"], :, :, right["done"]] = eye
            elif i > 0:
                w[left["done"], :, :, right["done"]] = eye
            seen = set()
            for c, word, last in words:
                prefix_l = word[:i]
                lstate = left.get(prefix_l, None) if any(l != "I" for l in prefix_l) else left["start"]
                if last < i:
                    continue  # stays in "done"
                if last == i:
                    w[lstate, :, :, right["done"]] += c * PAULI_MATRICES[word[i]]
                else:
                    prefix_r = word[: i + 1]
                    if any(l != "I" for l in prefix_r):
                        rstate = right[prefix_r]
                        edge = (lstate, rstate)
                        if edge not in seen:
                            seen.add(edge)
                            w[lstate, :, :, rstate] = PAULI_MATRICES[word[i]]
            tensors.append(w)
        mpo = cls(tensors)
        return mpo.compressed(tol) if compress else mpo

    def compressed(self, tol: float = 1e-13) -> "Mpo":
        """Drop MPO bond states that carry no weight (QR then SVD sweep)."""
        ts = [t.copy() for t in self.tensors]
        n = len(ts)
        for i in range(n - 1):
            wl, d1, d2, wr = ts[i].shape
            q, r = np.linalg.qr(ts[i].reshape(wl * d1 * d2, wr))
            ts[i] = q.reshape(wl, d1, d2, q.shape[1])
            ts[i + 1] = np.tensordot(r, ts[i + 1], axes=(1, 0))
        for i in range(n - 1, 0, -1):
            wl, d1, d2, wr = ts[i].shape
            u, s, vh = _svd(ts[i].reshape(wl, d1 * d2 * wr))
            k = truncation_rank(s, None, tol)
            ts[i] = vh[:k].reshape(k, d1, d2, wr)
            ts[i - 1] = np.tensordot(ts[i - 1], u[:, :k] * s[:k], axes=(3, 0))
        return Mpo(ts)

    def to_dense(self, limit: int = 12) -> np.ndarray:
        n = self.n_sites
        if n > limit:
            raise ValueError("MPO too large for a dense matrix")
        op = self.tensors[0][0]  # (out, in, right)
        for t in self.tensors[1:]:
            op = np.tensordot(op, t, axes=(op.ndim - 1, 0))
        op = op[..., 0]
        # axes: out0, in0, out1, in1, ..., little-endian reorder
        outs = [2 * i for i in range(n)][::-1]
        ins = [2 * i + 1 for i in range(n)][::-1]
        return op.transpose(outs + ins).reshape(2 ** n, 2 ** n)


def expectation(state: Mps, mpo: Mpo) -> complex:
    """``<psi|W|psi>`` (unnormalised)."""
    env = np.ones((1, 1, 1), dtype=complex)
    for a, w in zip(state.tensors, mpo.tensors):
        env = _mpo_env_left(env, a, w)
    return complex(env[0, 0, 0])


def _mpo_env_left(env, a, w):
    # env[bra, mpo, ket] -> across one site
    t = np.tensordot(env, a, axes=(2, 0))  # (bra, w, s, ket')
    t = np.tensordot(t, w, axes=([1, 2], [0, 2]))  # (bra, ket', s', w')
    t = np.tensordot(a.conj(), t, axes=([0, 1], [0, 2]))  # (bra', ket', w')
    return t.transpose(0, 2, 1)


def _mpo_env_right(env, a, w):
    t = np.tensordot(a, env, axes=(2, 2))  # (ket, s, bra', w')
    t = np.tensordot(w, t, axes=([2, 3], [1, 3]))  # (w, s', ket, bra')
    t = np.tensordot(a.conj(), t, axes=([1, 2], [1, 3]))  # (bra, w, ket)
    return t


def variance(state: Mps, mpo: Mpo) -> float:
    """``<H^2> - <H>^2`` for a normalised state, via a double-layer contraction."""
    env = np.ones((1, 1, 1, 1), dtype=complex)
    for a, w in zip(state.tensors, mpo.tensors):
        t = np.tensordot(env, a, axes=(3, 0))  # (bra, w1, w2, s, ket')
        t = np.tensordot(t, w, axes=([2, 3], [0, 2]))  # (bra, w1, ket', s', w2')
        t = np.tensordot(t, w, axes=([1, 3], [0, 2]))  # (bra, ket', w2', s'', w1')
        t = np.tensordot(a.conj(), t, axes=([0, 1], [0, 3]))  # (bra', ket', w2', w1')
        env = t.transpose(0, 3, 2, 1)
    h2 = env[0, 0, 0, 0].real
    h = expectation(state, mpo).real
    return float(h2 - h * h)


# -- checkpoints ------------------------------------------------------------------------

_MAGIC = b"AIMQMPS1"


def write_mps(path, state: Mps) -> None:
    """Binary checkpoint.

    Layout (little-endian): 8-byte magic ``AIMQMPS1``, ``uint64`` site count
    N, ``int64`` canonical centre (-1 for none), N+1 ``uint64`` bond
    dimensions including the two boundary ones, then every site tensor as
    row-major ``(left, 2, right)`` complex128 values.
    """
    dims = [1] + state.bond_dims + [1]
    center = -1 if state.canonical_center is None else state.canonical_center
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Qq", state.n_sites, center))
        fh.write(struct.pack(f"<{len(dims)}Q", *dims))
        for t in state.tensors:
            fh.write(np.ascontiguousarray(t, dtype="<c16").tobytes())


def read_mps(path) -> Mps:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != _MAGIC:
        raise ValueError("not an MPS checkpoint")
    n, center = struct.unpack_from("<Qq", data, 8)
    off = 24
    dims = struct.unpack_from(f"<{n + 1}Q", data, off)
    off += 8 * (n + 1)
    tensors = []
    for i in range(n):
        shape = (dims[i], 2, dims[i + 1])
        count = int(np.prod(shape))
        t = np.frombuffer(data, dtype="<c16", count=count, offset=off).reshape(shape)
        tensors.append(t.astype(complex))
        off += 16 * count
    if off != len(data):
        raise ValueError("trailing bytes in MPS checkpoint")
    return Mps(tensors, None if center < 0 else int(center))

