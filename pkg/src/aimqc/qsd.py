"""Synthesis of dense unitaries into {RX, RY, RZ, CNOT}.

Two-qubit unitaries go through the KAK (magic-basis) decomposition with at
most three CNOTs; larger ones through the recursive Shannon decomposition
(cosine-sine split plus demultiplexing into Gray-code multiplexed
rotations). Global phase is not tracked.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .circuit import Circuit, Gate

ANGLE_TOL = 1e-13

_MAGIC = np.array([[1, 1j, 0, 0], [0, 0, 1j, 1], [0, 0, 1j, -1], [1, -1j, 0, 0]], dtype=complex) / np.sqrt(2)
_PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.diag([1.0, -1.0]).astype(complex),
}
# eigenvalues of XX, YY, ZZ in the magic basis, stacked with the phase column
_KAK_SYSTEM = np.column_stack(
    [np.ones(4)]
    + [np.real(np.diag(_MAGIC.conj().T @ np.kron(_PAULI[p], _PAULI[p]) @ _MAGIC)) for p in "XYZ"]
)


# -- resource formulas ----------------------------------------------------------------

def cnot_count_optimized_qsd(n_g: int) -> int:
    """CNOTs of the optimised Shannon decomposition of an ``n_g``-qubit gate."""
    if n_g < 2:
        raise ValueError("n_g must be >= 2")
    return int(round(23 / 48 * 4 ** n_g - 1.5 * 2 ** n_g + 4 / 3))


def staircase_depth(n_layers: int, n_g: int, n_q: int) -> int:
    """Non-parallel CNOT depth of ``n_layers`` staircase layers of ``n_g``-qubit gates."""
    if n_layers < 1 or n_g < 2 or n_q < n_g:
        raise ValueError("need n_layers >= 1 and n_q >= n_g >= 2")
    return ((n_layers - 1) * n_g + (n_q - n_g + 1)) * cnot_count_optimized_qsd(n_g)


def qsd_cnot_bound(k: int) -> int:
    """Upper bound ``(3/4) 4^k - (3/2) 2^k`` for plain Shannon decomposition."""
    return int(0.75 * 4 ** k - 1.5 * 2 ** k)


# -- one qubit -------------------------------------------------------------------------

def _wrap(theta: float) -> float:
    # R(theta + 2 pi) = -R(theta): only a global phase here
    return float((theta + np.pi) % (2 * np.pi) - np.pi)


def zyz_angles(u: np.ndarray) -> tuple[float, float, float]:
    """Angles with ``u ~ RZ(a) RY(b) RZ(c)`` up to global phase."""
    su = u / np.sqrt(np.linalg.det(u))
    b = 2 * np.arctan2(abs(su[1, 0]), abs(su[0, 0]))
    plus = 2 * np.angle(su[1, 1]) if abs(su[1, 1]) > 1e-14 else 0.0
    minus = 2 * np.angle(su[1, 0]) if abs(su[1, 0]) > 1e-14 else 0.0
    return (plus + minus) / 2, b, (plus - minus) / 2


def one_qubit_gates(u: np.ndarray, qubit: int) -> list[Gate]:
    a, b, c = zyz_angles(np.asarray(u, dtype=complex))
    gates = []
    for axis, theta in (("RZ", c), ("RY", b), ("RZ", a)):
        theta = _wrap(theta)
        if abs(theta) > ANGLE_TOL:
            gates.append(Gate.rot(axis, qubit, theta))
    return gates


# -- two qubits ------------------------------------------------------------------------

def _split_tensor_product(k: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """``k ~ kron(hi, lo)``; also returns the second singular value as a residual."""
    r = k.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
    u, s, vh = np.linalg.svd(r)
    hi = np.sqrt(s[0]) * u[:, 0].reshape(2, 2)
    lo = np.sqrt(s[0]) * vh[0].reshape(2, 2)
    return hi, lo, float(s[1])


def _real_orthogonal_eigvecs(m: np.ndarray) -> np.ndarray:
    # m is complex symmetric unitary: Re m and Im m commute, so a generic real
    # combination shares their eigenvectors
    rng = np.random.default_rng(12345)
    for _ in range(20):
        x = rng.uniform()
        _, p = np.linalg.eigh(x * m.real + (1 - x) * m.imag)
        d = p.T @ m @ p
        if np.allclose(d, np.diag(np.diag(d)), atol=1e-11):
            return p
    raise np.linalg.LinAlgError("failed to diagonalise the magic-basis square")


def kak_coefficients(u: np.ndarray):
    """Return ``(k1, (a, b, c), k2)`` with ``u ~ k1 exp(i(aXX+bYY+cZZ)) k2``.

    ``k1`` and ``k2`` are local (tensor-product) 4x4 unitaries.
    """
    u = np.asarray(u, dtype=complex)
    u4 = u / np.linalg.det(u) ** 0.25
    up = _MAGIC.conj().T @ u4 @ _MAGIC
    p = _real_orthogonal_eigvecs(up.T @ up)
    if np.linalg.det(p) < 0:
        p[:, 0] = -p[:, 0]
    d = np.sqrt(np.diag(p.T @ (up.T @ up) @ p))
    o1 = up @ p / d
    if np.linalg.det(o1.real) < 0:
        d[0] = -d[0]
        o1[:, 0] = -o1[:, 0]
    k1 = _MAGIC @ o1.real @ _MAGIC.conj().T
    k2 = _MAGIC @ p.T @ _MAGIC.conj().T
    _, a, b, c = np.linalg.solve(_KAK_SYSTEM, np.angle(d))
    return k1, (float(a), float(b), float(c)), k2


def two_qubit_gates(u: np.ndarray, qubits=(0, 1)) -> list[Gate]:
    """At most three CNOTs; zero when ``u`` is a tensor product."""
    q0, q1 = qubits
    u = np.asarray(u, dtype=complex)
    hi, lo, resid = _split_tensor_product(u)
    if resid < 1e-12:
        return one_qubit_gates(lo, q0) + one_qubit_gates(hi, q1)
    k1, (a, b, c), k2 = kak_coefficients(u)
    k1_hi, k1_lo, _ = _split_tensor_product(k1)
    k2_hi, k2_lo, _ = _split_tensor_product(k2)
    t1, t2, t3 = np.pi / 2 - 2 * c, np.pi / 2 - 2 * a, 2 * b - np.pi / 2
    rz = lambda t: np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])  # noqa: E731
    gates = one_qubit_gates(rz(np.pi / 2) @ k2_lo, q0) + one_qubit_gates(k2_hi, q1)
    gates.append(Gate.cnot(q1, q0))
    gates += [Gate.rot("RY", q1, t3), Gate.cnot(q0, q1), Gate.rot("RZ", q0, t1), Gate.rot("RY", q1, t2)]
    gates.append(Gate.cnot(q1, q0))
    gates += one_qubit_gates(k1_lo, q0) + one_qubit_gates(k1_hi @ rz(-np.pi / 2), q1)
    return gates


# -- multiplexors ----------------------------------------------------------------------

def _gray(i: int) -> int:
    return i ^ (i >> 1)


def multiplexed_rotation(axis: str, angles: np.ndarray, controls: list[int], target: int) -> list[Gate]:
    """Uniformly controlled rotation: ``R(angles[j])`` on ``target`` when the
    controls read ``j = sum_i bit(controls[i]) 2^i``.

    Gray-code construction with ``2^m`` CNOTs; an all-zero multiplexor is
    dropped entirely.
    """
    angles = np.asarray(angles, dtype=float)
    m = len(controls)
    if angles.shape != (2 ** m,):
        raise ValueError("need one angle per control pattern")
    if np.all(np.abs(angles) < ANGLE_TOL):
        return []
    if m == 0:
        return [Gate.rot(axis, target, angles[0])]
    n = 2 ** m
    idx = np.arange(n)
    gray = np.array([_gray(i) for i in idx])
    signs = 1 - 2 * (np.bitwise_count(idx[:, None] & gray[None, :]).astype(int) & 1)
    alphas = signs.T @ angles / n
    gates = []
    for i in range(n):
        if abs(alphas[i]) > ANGLE_TOL:
            gates.append(Gate.rot(axis, target, alphas[i]))
        bit = (m - 1) if i == n - 1 else (int(i + 1) & -int(i + 1)).bit_length() - 1
        gates.append(Gate.cnot(controls[bit], target))
    return gates


def _demultiplex(a: np.ndarray, b: np.ndarray):
    """``a (+) b = (1 x v)(d (+) d^dag)(1 x w)``; returns ``(v, phases, w)``."""
    t, v = scipy.linalg.schur(a @ b.conj().T, output="complex")
    d = np.sqrt(np.diag(t))
    w = (d[:, None] * v.conj().T) @ b
    return v, np.angle(d), w


# -- Shannon decomposition ---------------------------------------------------------

def _qsd_gates(u: np.ndarray, qubits: list[int]) -> list[Gate]:
    k = len(qubits)
    if k == 1:
        return one_qubit_gates(u, qubits[0])
    if k == 2:
        return two_qubit_gates(u, tuple(qubits))
    if np.allclose(u, u[0, 0] * np.eye(len(u)), atol=1e-13):
        return []
    half = 2 ** (k - 1)
    (l0, l1), theta, (r0, r1) = scipy.linalg.cossin(u, p=half, q=half, separate=True)
    lower, top = qubits[:-1], qubits[-1]
    gates = []
    v, phi, w = _demultiplex(r0, r1)
    gates += _qsd_gates(w, lower)
    gates += multiplexed_rotation("RZ", -2 * phi, lower, top)
    gates += _qsd_gates(v, lower)
    gates += multiplexed_rotation("RY", 2 * theta, lower, top)
    v, phi, w = _demultiplex(l0, l1)
    gates += _qsd_gates(w, lower)
    gates += multiplexed_rotation("RZ", -2 * phi, lower, top)
    gates += _qsd_gates(v, lower)
    return gates


def qsd_decompose(u: np.ndarray, limit: int = 8) -> Circuit:
    """Synthesize a ``k``-qubit unitary (little-endian) into rotations and CNOTs."""
    u = np.asarray(u, dtype=complex)
    k = int(round(np.log2(u.shape[0])))
    if u.shape != (2 ** k, 2 ** k) or k < 1:
        raise ValueError("expected a 2^k x 2^k matrix")
    if k > limit:
        raise ValueError(f"{k} qubits exceeds the synthesis limit of {limit}")
    if not np.allclose(u.conj().T @ u, np.eye(2 ** k), atol=1e-10):
        raise ValueError("matrix is not unitary")
    return Circuit(k, _qsd_gates(u, list(range(k))))


def expand_blocks(circuit: Circuit, limit: int = 8) -> Circuit:
    """Replace every unitary block by its elementary-gate synthesis."""
    out = Circuit(circuit.n_qubits)
    for g in circuit.gates:
        if g.kind == "U":
            sub = qsd_decompose(g.matrix, limit)
            out.extend(s.remapped(g.qubits) for s in sub.gates)
        else:
            out.append(g)
    return out


def phase_aligned_error(u: np.ndarray, v: np.ndarray) -> float:
    """Operator-norm distance between ``u`` and ``v`` after fixing the global phase."""
    ov = np.trace(v.conj().T @ u)
    phase = ov / abs(ov) if abs(ov) > 0 else 1.0
    return float(np.linalg.norm(u - phase * v, 2))
