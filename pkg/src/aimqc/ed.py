"""Exact diagonalization: ground states and reference Green's functions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from .emulator import Statevector
from .gf import GREATER, LESSER, ContinuedFraction, GreensFunction, Orbital, _lanczos, combination_ladder
from .pauli import PauliHamiltonian

DENSE_LIMIT = 16
SPARSE_LIMIT = 24


@dataclass
class EdResult:
    energy: float
    state: Statevector
    spectrum: Optional[np.ndarray] = None
    residual: float = 0.0


def ed_ground_state(h: PauliHamiltonian, seed: int = 0, keep_spectrum: bool = False) -> EdResult:
    """Lowest eigenpair: dense ``eigh`` up to 16 qubits, ARPACK above."""
    n = h.n_qubits
    if n > SPARSE_LIMIT:
        raise ValueError(f"{n} qubits exceeds the exact-diagonalization limit of {SPARSE_LIMIT}")
    spectrum = None
    if n <= DENSE_LIMIT and (keep_spectrum or n <= 12):
        w, v = np.linalg.eigh(h.to_dense())
        energy, vec = w[0], v[:, 0]
        spectrum = w if keep_spectrum else None
    else:
        v0 = np.random.default_rng(seed).standard_normal(2 ** n).astype(complex)
        w, v = spla.eigsh(h.to_sparse(), k=1, which="SA", v0=v0, tol=1e-13)
        energy, vec = w[0], v[:, 0]
    vec = vec / np.linalg.norm(vec)
    # fix the global phase so results are reproducible
    big = np.argmax(np.abs(vec))
    vec = vec * (abs(vec[big]) / vec[big])
    residual = float(np.linalg.norm(h.apply(vec) - energy * vec))
    return EdResult(float(energy), Statevector(vec), spectrum, residual)


def ed_green_function(res: EdResult, h: PauliHamiltonian, orbital: Orbital, branch: str,
                      max_depth: int = 200, breakdown: float = 1e-12) -> ContinuedFraction:
    """Continued fraction from Lanczos on the full Hilbert space.

    Starts from ``c^dag|GS>`` (greater) or ``c|GS>`` (lesser); energies are
    measured from the ground-state energy.
    """
    if branch not in (GREATER, LESSER):
        raise ValueError(f"unknown branch {branch}")
    phi0 = combination_ladder(orbital, branch == GREATER, res.state).amplitudes
    norm_sq = float(np.vdot(phi0, phi0).real)
    if norm_sq < 1e-14:
        return ContinuedFraction(np.zeros(1), np.zeros(0), 0.0, branch, res.energy)
    mat = h.to_sparse()
    shifted = lambda v: mat @ v - res.energy * v  # noqa: E731
    a, b_sq = _lanczos(shifted, phi0, min(max_depth, 2 ** h.n_qubits), breakdown)
    return ContinuedFraction(a, b_sq, norm_sq, branch, res.energy)


def ed_green_functions(res: EdResult, h: PauliHamiltonian, orbitals, max_depth: int = 200) -> GreensFunction:
    gf = GreensFunction(e_ref=res.energy)
    for orb in orbitals:
        pair = tuple(ed_green_function(res, h, orb, b, max_depth) for b in (GREATER, LESSER))
        gf.branches[orb if isinstance(orb, (int, np.integer)) else tuple(orb)] = pair
    return gf


def ed_impurity_solver(max_depth: int = 200):
    """Impurity Green's function on an arbitrary grid, for the DMFT loop."""
    from .model import build_hamiltonian

    def solve(model, z):
        h, _ = build_hamiltonian(model)
        res = ed_ground_state(h)
        g = ed_green_function(res, h, 0, GREATER, max_depth)
        l = ed_green_function(res, h, 0, LESSER, max_depth)
        return g(np.asarray(z)) + l(np.asarray(z))

    return solve
