"""Randomised invariants, at least 100 cases each."""

import numpy as np
import scipy.linalg
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from aimqc.circuit import Circuit, Gate
from aimqc.ed import ed_ground_state
from aimqc.emulator import Statevector, apply_circuit, apply_ladder, make_propagator
from aimqc.gf import (
    GREATER, LESSER, ContinuedFraction, QsegConfig, build_krylov_matrices, default_grid, dos, lanczos_from_matrices,
    qseg_green_function,
)
from aimqc.model import AimModel, build_hamiltonian, number_operator
from aimqc.mps import Mps, truncate

from conftest import random_unitary

PROPERTY = settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])

seeds = st.integers(0, 2 ** 32 - 1)


def _random_model(seed, n_imp=None, n_bath=None, min_coupling=0.0):
    rng = np.random.default_rng(seed)
    n_imp = n_imp or int(rng.integers(1, 3))
    n_bath = int(rng.integers(0, 3 - n_imp + 1)) if n_bath is None else n_bath
    a = rng.standard_normal((n_imp, n_imp)) + 1j * rng.standard_normal((n_imp, n_imp))
    b = rng.standard_normal((n_bath, n_bath)) + 1j * rng.standard_normal((n_bath, n_bath))
    v = rng.uniform(min_coupling, 1, (n_imp, n_bath)) * np.exp(2j * np.pi * rng.random((n_imp, n_bath)))
    u = rng.uniform(0, 4)
    j = rng.uniform(0, 0.5) if n_imp > 1 else 0.0
    return AimModel(0.5 * (a + a.conj().T), 0.5 * (b + b.conj().T), v, u, j)


@PROPERTY
@given(seeds)
def test_jordan_wigner_hermitian_and_number_conserving(seed):
    h, split = build_hamiltonian(_random_model(seed))
    m = h.to_dense()
    n = number_operator(h.n_qubits).to_dense()
    assert np.abs(m - m.conj().T).max() < 1e-12
    assert np.abs(m @ n - n @ m).max() < 1e-12
    assert np.abs(split.h0_pauli().to_dense() + split.hint_pauli().to_dense() - m).max() < 1e-12


@PROPERTY
@given(seeds, st.integers(2, 7), st.integers(1, 6))
def test_mps_canonical_isometries(seed, n, chi):
    psi = Mps.random(n, chi, seed=seed)
    center = seed % n
    moved = psi.copy().canonicalize(center)
    assert moved.is_canonical(1e-10)
    assert moved.tensors[0].shape[0] == 1 and moved.tensors[-1].shape[2] == 1
    assert abs(abs(np.vdot(psi.to_statevector(), moved.to_statevector())) - psi.norm() ** 2) < 1e-10 * psi.norm() ** 2


@PROPERTY
@given(seeds, st.integers(4, 7))
def test_truncation_fidelity_monotone(seed, n):
    psi = Mps.random(n, 8, seed=seed).normalized()
    fids = [truncate(psi, chi)[1] for chi in range(psi.max_bond, 0, -1)]
    assert all(b <= a + 1e-10 for a, b in zip(fids, fids[1:]))
    assert fids[0] >= 1 - 1e-10
    assert all(0 <= f <= 1 + 1e-12 for f in fids)


@PROPERTY
@given(seeds, st.integers(1, 5), st.integers(1, 12))
def test_circuits_preserve_norm(seed, n, n_gates):
    rng = np.random.default_rng(seed)
    circuit = Circuit(n)
    for _ in range(n_gates):
        kind = rng.integers(3) if n > 1 else 0
        if kind == 0:
            circuit.append(Gate.rot(str(rng.choice(["RX", "RY", "RZ"])), int(rng.integers(n)), float(rng.uniform(-7, 7))))
        elif kind == 1:
            a, b = rng.choice(n, 2, replace=False)
            circuit.append(Gate.cnot(int(a), int(b)))
        else:
            k = int(rng.integers(2, n + 1))
            circuit.append(Gate.unitary([int(q) for q in rng.choice(n, k, replace=False)], random_unitary(2 ** k, rng)))
    out = apply_circuit(circuit, Statevector.zero(n))
    assert abs(out.norm() - 1) < 1e-10


@PROPERTY
@given(seeds)
def test_trotter_local_error_is_third_order(seed):
    _, split = build_hamiltonian(_random_model(seed, n_imp=1, n_bath=1, min_coupling=0.3))
    h = (split.h0_pauli() + split.hint_pauli()).to_dense()
    errors = []
    for dt in (0.02, 0.01):
        errors.append(np.linalg.norm(make_propagator(split, dt).matrix() - scipy.linalg.expm(-1j * dt * h), 2))
    assume(errors[1] > 1e-12)
    assert 6.5 < errors[0] / errors[1] < 9.5


@PROPERTY
@given(seeds, st.integers(1, 6))
def test_anticommutation_sum_rule(seed, n):
    rng = np.random.default_rng(seed)
    vec = rng.standard_normal(2 ** n) + 1j * rng.standard_normal(2 ** n)
    state = Statevector(vec / np.linalg.norm(vec))
    p = int(rng.integers(n))
    total = apply_ladder(p, True, state).norm() ** 2 + apply_ladder(p, False, state).norm() ** 2
    assert abs(total - 1) < 1e-12


def _qseg(seed, n_l=8):
    model = _random_model(seed, n_imp=1, n_bath=1)
    h, split = build_hamiltonian(model)
    res = ed_ground_state(h)
    cfg = QsegConfig(dt=0.05, n_l=n_l)
    return res, h, split, cfg


@PROPERTY
@given(seeds)
def test_dos_causal_with_unit_weight(seed):
    res, h, split, cfg = _qseg(seed)
    gf = qseg_green_function(res.state, res.energy, [0], cfg, make_propagator(split, cfg.dt), h)
    curve = gf.dos(0, default_grid(-20, 20, 4001), 0.1)
    assert curve.values.min() >= -1e-10
    assert 0.95 <= curve.integral() <= 1.05


@PROPERTY
@given(seeds, st.integers(1, 6))
def test_continued_fraction_causal(seed, depth):
    rng = np.random.default_rng(seed)
    branch = GREATER if seed % 2 else LESSER
    cf = ContinuedFraction(rng.uniform(-5, 5, depth), rng.uniform(1e-3, 3, depth - 1), float(rng.uniform(0.1, 1)), branch)
    delta = float(rng.uniform(0.01, 1))
    assert dos(cf, default_grid(-15, 15, 601), delta).values.min() >= -1e-10


@PROPERTY
@given(seeds)
def test_overlap_matrix_toeplitz(seed):
    res, h, split, cfg = _qseg(seed, n_l=6)
    branch = GREATER if seed % 2 else LESSER
    kd = build_krylov_matrices(res.state, res.energy, 0, branch, cfg, make_propagator(split, cfg.dt), h)
    assume(not kd.degenerate)
    s = kd.S
    assert np.array_equal(s[1:, 1:], s[:-1, :-1])
    assert np.abs(s - s.conj().T).max() < 1e-9
    assert np.linalg.eigvalsh(s).min() > -1e-9 * np.abs(s).max()
    assert np.abs(kd.H - kd.H.conj().T).max() < 1e-9


@PROPERTY
@given(seeds, st.floats(0.1, 10), st.floats(0, 2 * np.pi))
def test_lanczos_scale_invariance(seed, scale, phase):
    res, h, split, cfg = _qseg(seed, n_l=6)
    prop = make_propagator(split, cfg.dt)
    base = build_krylov_matrices(res.state, res.energy, 0, GREATER, cfg, prop, h)
    assume(base.b0_sq > 1e-3)
    scaled = build_krylov_matrices(res.state, res.energy, [(0, scale * np.exp(1j * phase))], GREATER, cfg, prop, h)
    a, b = lanczos_from_matrices(base), lanczos_from_matrices(scaled)
    assert a.depth == b.depth
    assert np.allclose(a.a, b.a, atol=1e-10) and np.allclose(a.b_sq, b.b_sq, atol=1e-10)
    assert abs(b.prefactor - scale ** 2 * a.prefactor) < 1e-10 * scale ** 2
