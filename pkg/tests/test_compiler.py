import warnings

import numpy as np
import pytest

from aimqc.circuit import Circuit, Gate
from aimqc.compiler import (
    apply_circuit_mps, exact_ladder, hybrid_compile, ladder_report, local_optimal_update, right_canonical_trimmed,
    variational_compile,
)
from aimqc.emulator import Statevector, apply_circuit
from aimqc.mps import Mps, fidelity

from conftest import random_unitary


def _prepared_fidelity(circuit, target):
    vec = apply_circuit(circuit, Statevector.zero(circuit.n_qubits)).amplitudes
    ref = target.normalized().to_statevector()
    return abs(np.vdot(ref, vec)) ** 2


def test_exact_ladder_on_ground_state(aim, aim_ground):
    psi, _ = aim_ground
    circuit = exact_ladder(psi)
    assert _prepared_fidelity(circuit, psi) >= 1 - 1e-10
    assert len(circuit) == psi.n_sites - 1
    chis = right_canonical_trimmed(psi).bond_dims
    for j, g in enumerate(circuit.gates):
        assert g.qubits[0] == j
        assert len(g.qubits) <= int(np.ceil(np.log2(max(chis[j], 2)))) + 1
    rep = ladder_report(psi, circuit, aim[3])
    assert rep.fidelity >= 1 - 1e-10
    assert rep.energy_qc == pytest.approx(aim_ground[1].energy, abs=1e-8)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_exact_ladder_random_states(seed):
    psi = Mps.random(6, 4, seed=seed).normalized()
    assert _prepared_fidelity(exact_ladder(psi), psi) >= 1 - 1e-10


def test_exact_ladder_product_state():
    psi = Mps.product_state([1, 0, 1, 1])
    circuit = exact_ladder(psi)
    assert len(circuit) == 4 and all(len(g.qubits) == 1 for g in circuit.gates)
    assert _prepared_fidelity(circuit, psi) == pytest.approx(1)


def test_exact_ladder_rejects_unnormalised():
    psi = Mps.random(4, 2, seed=0).normalized()
    psi.tensors[0] = 2 * psi.tensors[0]
    with pytest.raises(ValueError):
        exact_ladder(psi)


def test_circuit_on_mps_matches_statevector(rng):
    c = Circuit(5, [Gate.unitary([0, 1], random_unitary(4, rng)), Gate.unitary([3, 1], random_unitary(4, rng)),
                    Gate.unitary([2, 3, 4], random_unitary(8, rng)), Gate.cnot(4, 0)])
    psi, _ = apply_circuit_mps(c)
    assert np.allclose(psi.to_statevector(), apply_circuit(c, Statevector.zero(5)).amplitudes, atol=1e-12)
    back, _ = apply_circuit_mps(c, psi, inverse=True)
    assert fidelity(back, Mps.product_state([0] * 5)) == pytest.approx(1)


def test_local_optimal_update_is_optimal(rng):
    env = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    w = local_optimal_update(env)
    assert np.allclose(w.conj().T @ w, np.eye(4), atol=1e-12)
    best = np.trace(w.conj().T @ env).real
    assert best == pytest.approx(np.linalg.svd(env, compute_uv=False).sum())
    for _ in range(20):
        assert np.trace(random_unitary(4, rng).conj().T @ env).real <= best + 1e-12


def test_local_optimal_update_degenerate_inputs():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert np.allclose(local_optimal_update(np.zeros((2, 2))), np.eye(2))
    assert any(issubclass(w.category, RuntimeWarning) for w in caught)
    with pytest.raises(ValueError):
        local_optimal_update(np.array([[np.nan, 0], [0, 1]]))


def test_variational_trace_is_monotone(aim, aim_ground):
    psi, _ = aim_ground
    _, reports = variational_compile(psi, n_g=2, max_layers=3, f_target=0.999, hamiltonian=aim[3])
    trace = [f for r in reports for f in r.fidelity_history]
    assert all(b >= a - 1e-10 for a, b in zip(trace, trace[1:]))
    assert all(r.fidelity == pytest.approx(r.fidelity_history[-1], abs=1e-9) for r in reports)
    assert [r.n_layers for r in reports] == list(range(1, len(reports) + 1))


def test_variational_reaches_target(aim_ground):
    psi, _ = aim_ground
    circuit, reports = variational_compile(psi, n_g=3, max_layers=6, f_target=0.99)
    assert reports[-1].fidelity >= 0.99 and reports[-1].flag == ""
    assert all(len(g.qubits) == 3 for g in circuit.gates)
    assert _prepared_fidelity(circuit, psi) == pytest.approx(reports[-1].fidelity, abs=1e-9)


def test_variational_exact_for_low_bond_state():
    psi = Mps.random(5, 2, seed=3).normalized()
    _, reports = variational_compile(psi, n_g=2, max_layers=1)
    assert reports[0].fidelity >= 1 - 1e-8


def test_variational_flags_unreached_target(aim_ground):
    psi, _ = aim_ground
    _, reports = variational_compile(psi, n_g=2, max_layers=1, f_target=0.9999)
    assert reports[-1].flag == "target_not_reached"


@pytest.mark.parametrize("kwargs", [{"n_g": 1}, {"n_g": 9}, {"layer_init": "random"}])
def test_variational_invalid(aim_ground, kwargs):
    with pytest.raises(ValueError):
        variational_compile(aim_ground[0], **kwargs)


def test_hybrid_reaches_target(aim, aim_ground):
    psi, _ = aim_ground
    circuit, report = hybrid_compile(psi, 0.99, hamiltonian=aim[3])
    assert report.fidelity >= 0.99
    assert all(len(g.qubits) <= 2 for g in circuit.gates)
    assert _prepared_fidelity(circuit, psi) == pytest.approx(report.fidelity, abs=1e-9)
    with pytest.raises(ValueError):
        hybrid_compile(psi, 1.5)
