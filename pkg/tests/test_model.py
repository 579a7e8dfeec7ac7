import numpy as np
import pytest

from aimqc.model import (
    AimModel, FermionTerm, block_tridiagonalize, build_hamiltonian, hubbard_atom, jordan_wigner,
    kanamori_terms, number_operator, read_model, small_aim, spin_orbital_index, star_model, write_model,
)
from aimqc.pauli import key_from_letters

from fermions import model_matrix, monomial_matrix


def test_spin_orbital_index_layout():
    assert spin_orbital_index(0, "up", 4) == 0
    assert spin_orbital_index(3, "up", 4) == 3
    assert spin_orbital_index(0, "down", 4) == 4
    with pytest.raises(IndexError):
        spin_orbital_index(4, "up", 4)


def test_kanamori_single_orbital_is_hubbard_u():
    terms = kanamori_terms(4.0, 0.0, 1)
    assert len(terms) == 1
    assert terms[0].coefficient == 4.0
    assert sorted(p for p, _ in terms[0].operators) == [0, 0, 1, 1]


def test_kanamori_density_coefficients():
    terms = kanamori_terms(4.0, 1.0, 2)
    dens = {t.coefficient.real for t in terms if all(
        t.operators[k][0] == t.operators[k + 1][0] for k in (0, 2))}
    assert {4.0, 2.0, 1.0} <= dens


def test_kanamori_three_orbital_count():
    # 3 intra + 2*3 density per spin pairing*2 + 6 spin-flip + 3 pair-hop pairs
    terms = kanamori_terms(3.0, 0.5, 3)
    assert len(terms) == 3 + 3 * 4 + 3 * 2 + 3 * 2


def test_jw_single_hopping():
    h = jordan_wigner(FermionTerm(1.0, ((0, True), (2, False))), 3)
    h = h + h.adjoint()
    xzx = key_from_letters({0: "X", 1: "Z", 2: "X"})
    yzy = key_from_letters({0: "Y", 1: "Z", 2: "Y"})
    assert h.coefficient(xzx) == pytest.approx(0.5)
    assert h.coefficient(yzy) == pytest.approx(0.5)
    assert len(h) == 2


@pytest.mark.parametrize("ops", [((1, True), (0, False)), ((2, True), (0, True), (1, False), (2, False))])
def test_jw_matches_brute_force(ops):
    term = FermionTerm(0.7 - 0.2j, ops)
    assert np.allclose(jordan_wigner(term, 3).to_dense(), monomial_matrix(term.coefficient, ops, 3))


def test_hubbard_atom_spectrum():
    ham, _ = build_hamiltonian(hubbard_atom(4.0))
    assert np.allclose(np.sort(np.linalg.eigvalsh(ham.to_dense())), [-2, -2, 0, 0])


def test_hamiltonian_matches_brute_force_and_split():
    model = small_aim(4.0)
    ham, split = build_hamiltonian(model)
    dense = ham.to_dense()
    assert np.max(np.abs(dense - model_matrix(model))) < 1e-12
    assert np.max(np.abs(dense - (split.h0_pauli() + split.hint_pauli()).to_dense())) < 1e-12
    assert set(split.impurity_orbitals) == {0, 4}


def test_two_orbital_kanamori_matches_brute_force():
    model = AimModel([[0.1, 0.05], [0.05, -0.2]], [[0.3]], [[0.2], [0.4]], U=2.0, J=0.4)
    ham, _ = build_hamiltonian(model)
    assert ham.is_hermitian()
    assert np.max(np.abs(ham.to_dense() - model_matrix(model))) < 1e-12


def test_particle_number_conserved():
    ham, _ = build_hamiltonian(small_aim())
    h, n = ham.to_dense(), number_operator(8).to_dense()
    assert np.max(np.abs(h @ n - n @ h)) < 1e-12


def test_model_validation():
    with pytest.raises(ValueError):
        AimModel([[0, 1], [0, 0]], np.zeros((0, 0)), np.zeros((2, 0)))
    with pytest.raises(ValueError):
        AimModel([[0]], [[0]], [[1]], U=-1)


def test_block_tridiagonalize_star_to_chain():
    model = star_model(0.0, [-1.0, -0.3, 0.4, 1.1], [0.5, 0.3, 0.2, 0.6])
    h = model.hopping_matrix()
    t, T = block_tridiagonalize(h, 1)
    assert np.allclose(np.linalg.eigvalsh(t), np.linalg.eigvalsh(h), atol=1e-10)
    assert np.allclose(T.conj().T @ T, np.eye(5), atol=1e-12)
    assert np.allclose(T[0], np.eye(5)[0])
    assert np.max(np.abs(np.triu(t, 2))) < 1e-12


def test_block_tridiagonalize_random_blocks(rng):
    a = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    h = a + a.conj().T
    t, _ = block_tridiagonalize(h, 2)
    for i in range(4):
        for j in range(4):
            if abs(i - j) > 1:
                assert np.max(np.abs(t[2 * i:2 * i + 2, 2 * j:2 * j + 2])) < 1e-12


def test_model_file_round_trip(tmp_path):
    model = AimModel([[0.1, 0.2j], [-0.2j, 0.3]], [[1.0]], [[0.5], [0.25]], 3.0, 0.5)
    write_model(model, tmp_path / "m.txt")
    back = read_model(tmp_path / "m.txt")
    for name in ("eps_imp", "eps_bath", "V"):
        assert np.array_equal(getattr(back, name), getattr(model, name))
    assert (back.U, back.J) == (3.0, 0.5)


def test_model_file_rejects_unknown_key(tmp_path):
    (tmp_path / "m.txt").write_text("n_imp 1\nn_bath 0\nfoo 3\n")
    with pytest.raises(ValueError, match="foo"):
        read_model(tmp_path / "m.txt")
