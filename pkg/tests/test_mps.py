import numpy as np
import pytest

from aimqc.dmrg import dmrg_ground_state
from aimqc.model import build_hamiltonian, number_operator, resonant_level, small_aim
from aimqc.mps import (
    Mpo, Mps, apply_gate, expectation, fidelity, inner, read_mps, truncate, variance, write_mps,
)
from aimqc.pauli import PauliHamiltonian, key_from_letters

from conftest import random_unitary


def dense_oracle(state: Mps) -> np.ndarray:
    """Plain contraction, then reorder to the little-endian index."""
    out = state.tensors[0][0]
    for t in state.tensors[1:]:
        out = np.tensordot(out, t, axes=(-1, 0))
    out = out[..., 0]
    return out.transpose(list(range(state.n_sites))[::-1]).reshape(-1)


def test_product_state_amplitudes():
    vec = Mps.product_state([1, 0, 1]).to_statevector()
    assert vec[0b101] == 1 and np.count_nonzero(vec) == 1


def test_single_rotated_site():
    ry = np.array([[np.cos(0.3), -np.sin(0.3)], [np.sin(0.3), np.cos(0.3)]])
    vec = Mps.from_local_states([ry[:, 0], [1, 0]]).to_statevector()
    assert np.count_nonzero(np.abs(vec) > 1e-15) == 2
    assert np.allclose(vec[:2], ry[:, 0])


def test_to_statevector_matches_contraction():
    state = Mps.random(8, 3, seed=5)
    vec = state.to_statevector()
    assert np.allclose(vec, dense_oracle(state), atol=1e-13)
    assert np.linalg.norm(vec) == pytest.approx(state.norm(), abs=1e-12)


def test_inner_matches_dense():
    a, b = Mps.random(6, 4, seed=1).normalized(), Mps.random(6, 3, seed=2).normalized()
    assert abs(inner(a, b) - np.vdot(dense_oracle(a), dense_oracle(b))) < 1e-12
    assert 0 <= fidelity(a, b) <= 1 + 1e-12


def test_canonicalize_keeps_state_and_isometries():
    state = Mps.random(7, 4, seed=3)
    for c in (0, 3, 6):
        moved = state.canonicalize(c)
        assert moved.is_canonical(1e-12)
        ov = np.vdot(dense_oracle(state), dense_oracle(moved)) / state.norm() ** 2
        assert abs(ov - 1) < 1e-12
        centre = moved.tensors[c]
        assert np.vdot(centre, centre).real == pytest.approx(state.norm() ** 2, rel=1e-12)


def test_from_statevector_round_trip(rng):
    vec = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    vec /= np.linalg.norm(vec)
    assert np.allclose(Mps.from_statevector(vec).to_statevector(), vec, atol=1e-12)


def test_ghz_truncation_half():
    vec = np.zeros(16)
    vec[0] = vec[-1] = 1 / np.sqrt(2)
    trunc, fid = truncate(Mps.from_statevector(vec), 1)
    assert fid == pytest.approx(0.5, abs=1e-12)
    assert trunc.max_bond == 1


def test_truncation_sweeps_do_not_lower_fidelity():
    state = Mps.random(8, 6, seed=11).normalized()
    _, before = truncate(state, 2, fidelity_sweeps=0)
    approx, after = truncate(state, 2, fidelity_sweeps=3)
    assert after >= before - 1e-12
    assert max(approx.bond_dims) <= 2
    assert after == pytest.approx(abs(np.vdot(dense_oracle(approx), dense_oracle(state))) ** 2, abs=1e-10)


def test_truncation_fidelity_matches_dense_on_ground_state(aim_ground):
    psi, _ = aim_ground
    approx, fid = truncate(psi, 4)
    assert fid == pytest.approx(abs(np.vdot(dense_oracle(approx), dense_oracle(psi.normalized()))) ** 2, abs=1e-10)


@pytest.mark.parametrize("first,k", [(0, 1), (2, 2), (3, 3), (5, 3)])
def test_apply_gate_matches_dense(first, k, rng):
    from aimqc.circuit import apply_matrix

    state = Mps.random(8, 3, seed=7)
    u = random_unitary(2 ** k, rng)
    out = apply_gate(state, u, first)
    ref = apply_matrix(dense_oracle(state), u, list(range(first, first + k)), 8)
    assert np.allclose(dense_oracle(out), ref, atol=1e-12)


def test_mpo_matches_dense():
    ham, _ = build_hamiltonian(small_aim())
    mpo = Mpo.from_pauli(ham)
    assert np.max(np.abs(mpo.to_dense() - ham.to_dense())) < 1e-12


def test_mpo_with_identity_term():
    ham = PauliHamiltonian(3, {key_from_letters({}): 1.5, key_from_letters({0: "X", 2: "Z"}): 0.5})
    assert np.allclose(Mpo.from_pauli(ham).to_dense(), ham.to_dense())


def test_expectation_and_variance_match_dense():
    ham, _ = build_hamiltonian(small_aim())
    state = Mps.random(8, 4, seed=9).normalized()
    vec = dense_oracle(state)
    h = ham.to_dense()
    e = np.vdot(vec, h @ vec).real
    assert expectation(state, Mpo.from_pauli(ham)).real == pytest.approx(e, abs=1e-12)
    assert variance(state, Mpo.from_pauli(ham)) == pytest.approx(np.vdot(h @ vec, h @ vec).real - e ** 2, abs=1e-10)


def test_checkpoint_round_trip(tmp_path):
    state = Mps.random(5, 3, seed=4).canonicalize(2)
    write_mps(tmp_path / "s.mps", state)
    back = read_mps(tmp_path / "s.mps")
    assert back.canonical_center == 2
    assert all(np.array_equal(a, b) for a, b in zip(state.tensors, back.tensors))
    assert (tmp_path / "s.mps").read_bytes()[:8] == b"AIMQMPS1"


def test_dmrg_matches_ed(aim, aim_ground, aim_ed):
    psi, rep = aim_ground
    assert rep.converged
    assert abs(rep.energy - aim_ed.energy) < 1e-8 * abs(aim_ed.energy)
    assert rep.variance < 1e-6
    vec = psi.to_statevector()
    assert abs(np.vdot(vec, aim_ed.state.amplitudes)) ** 2 == pytest.approx(1, abs=1e-10)
    n = np.vdot(vec, number_operator(8).to_dense() @ vec).real
    assert n == pytest.approx(round(n), abs=1e-6)


def test_dmrg_free_fermions():
    model = small_aim(0.0)
    ham, split = build_hamiltonian(model)
    _, rep = dmrg_ground_state(Mpo.from_pauli(ham), 16, sweeps=20, tol=1e-12)
    w = np.linalg.eigvalsh(split.h0_single_particle)
    assert rep.energy == pytest.approx(w[w < 0].sum(), abs=1e-10)


def test_dmrg_small_bond_is_variational(aim, aim_ed):
    _, rep = dmrg_ground_state(aim[3], 1, sweeps=6)
    assert rep.energy > aim_ed.energy


def test_dmrg_resonant_level():
    ham, _ = build_hamiltonian(resonant_level())
    _, rep = dmrg_ground_state(Mpo.from_pauli(ham), 4)
    assert rep.energy == pytest.approx(-1.0, abs=1e-10)
