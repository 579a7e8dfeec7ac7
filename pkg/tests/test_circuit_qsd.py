import numpy as np
import pytest

from aimqc.circuit import CNOT_MATRIX, Circuit, Gate, apply_matrix, read_circuit, rotation, write_circuit
from aimqc.qsd import (
    cnot_count_optimized_qsd, expand_blocks, kak_coefficients, multiplexed_rotation, phase_aligned_error,
    qsd_cnot_bound, qsd_decompose, staircase_depth, two_qubit_gates, zyz_angles,
)

from conftest import random_unitary


def kron_le(*mats):
    """Little-endian Kronecker product: first matrix acts on qubit 0."""
    out = np.eye(1)
    for m in mats:
        out = np.kron(m, out)
    return out


def test_rotation_x_flips_up_to_phase():
    vec = Circuit(1, [Gate.rot("RX", 0, np.pi)]).state()
    assert abs(vec[1]) == pytest.approx(1)


def test_cnot_little_endian():
    c = Circuit(2, [Gate.rot("RX", 0, np.pi), Gate.cnot(0, 1)])
    assert abs(c.state()[0b11]) == pytest.approx(1)


def test_apply_matrix_against_kron(rng):
    u = random_unitary(4, rng)
    vec = rng.standard_normal(8) + 0j
    # u on qubits (0, 2): build via permutation oracle
    full = np.zeros((8, 8), dtype=complex)
    for col in range(8):
        b = [(col >> q) & 1 for q in range(3)]
        local_in = b[0] + 2 * b[2]
        for local_out in range(4):
            row = (local_out & 1) + 2 * b[1] + 4 * (local_out >> 1)
            full[row, col] += u[local_out, local_in]
    assert np.allclose(apply_matrix(vec, u, (0, 2), 3), full @ vec)


def test_gate_rejects_non_unitary():
    with pytest.raises(ValueError):
        Gate.unitary([0], np.array([[1, 1], [0, 1]]))


def test_circuit_inverse(rng):
    c = Circuit(3, [Gate.unitary([0, 2], random_unitary(4, rng)), Gate.rot("RY", 1, 0.3), Gate.cnot(1, 0)])
    assert np.allclose(c.inverse().unitary() @ c.unitary(), np.eye(8), atol=1e-12)


def test_circuit_file_round_trip(tmp_path, rng):
    c = Circuit(4, [Gate.unitary([1, 2], random_unitary(4, rng)), Gate.rot("RZ", 3, 0.1234567890123), Gate.cnot(0, 3)])
    write_circuit(tmp_path / "c.txt", c)
    back = read_circuit(tmp_path / "c.txt")
    assert back.n_qubits == 4 and len(back) == 3
    assert np.array_equal(back.gates[0].matrix, c.gates[0].matrix)
    assert back.gates[1].angle == c.gates[1].angle


def test_cnot_depth_counts_parallel_gates():
    c = Circuit(4, [Gate.cnot(0, 1), Gate.cnot(2, 3), Gate.cnot(1, 2)])
    assert c.cnot_depth() == 2 and c.cnot_count() == 3


@pytest.mark.parametrize("n_g,count", [(2, 3), (3, 20), (4, 100), (5, 444)])
def test_optimized_cnot_formula(n_g, count):
    assert cnot_count_optimized_qsd(n_g) == count


def test_staircase_depth_formula():
    assert staircase_depth(1, 2, 8) == 7 * 3
    assert staircase_depth(3, 3, 10) == (2 * 3 + 8) * 20


def test_zyz(rng):
    u = random_unitary(2, rng)
    a, b, c = zyz_angles(u)
    v = rotation("RZ", a) @ rotation("RY", b) @ rotation("RZ", c)
    assert phase_aligned_error(u, v) < 1e-12


def test_kak_reconstructs(rng):
    u = random_unitary(4, rng)
    k1, (a, b, c), k2 = kak_coefficients(u)
    xx, yy, zz = (np.kron(p, p) for p in (np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1, -1])))
    from scipy.linalg import expm

    assert phase_aligned_error(u, k1 @ expm(1j * (a * xx + b * yy + c * zz)) @ k2) < 1e-10


def test_two_qubit_tensor_product_needs_no_cnot(rng):
    u = kron_le(random_unitary(2, rng), random_unitary(2, rng))
    gates = two_qubit_gates(u)
    assert not any(g.kind == "CNOT" for g in gates)
    assert phase_aligned_error(u, Circuit(2, gates).unitary()) < 1e-10


def test_two_qubit_cnot_itself():
    c = qsd_decompose(CNOT_MATRIX)
    assert c.cnot_count() <= 3
    assert phase_aligned_error(CNOT_MATRIX, c.unitary()) < 1e-10


def test_multiplexed_rotation(rng):
    angles = rng.uniform(-np.pi, np.pi, 4)
    c = Circuit(3, multiplexed_rotation("RY", angles, [0, 1], 2))
    u = c.unitary()
    for j in range(4):
        block = u[np.ix_([j, j + 4], [j, j + 4])]
        assert np.allclose(block, rotation("RY", angles[j]), atol=1e-12)
    assert multiplexed_rotation("RZ", np.zeros(4), [0, 1], 2) == []


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_qsd_reconstructs(k, rng):
    for _ in range(5):
        u = random_unitary(2 ** k, rng)
        c = qsd_decompose(u)
        assert phase_aligned_error(u, c.unitary()) < 1e-9
        assert c.cnot_count() <= max(qsd_cnot_bound(k), 0)


def test_qsd_identity_is_free():
    assert qsd_decompose(np.eye(8)).cnot_count() == 0


def test_expand_blocks(rng):
    c = Circuit(4, [Gate.unitary([1, 2, 3], random_unitary(8, rng)), Gate.unitary([0, 1], random_unitary(4, rng))])
    e = expand_blocks(c)
    assert all(g.kind != "U" for g in e)
    assert phase_aligned_error(c.unitary(), e.unitary()) < 1e-9
