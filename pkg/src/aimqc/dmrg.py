"""Two-site DMRG ground-state search on an :class:`~aimqc.mps.Mpo`."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .mps import Mpo, Mps, _mpo_env_left, _mpo_env_right, _svd, truncation_rank, variance

logger = logging.getLogger(__name__)

# below this local dimension the effective Hamiltonian is diagonalised densely
_DENSE_LOCAL = 256


@dataclass
class DmrgReport:
    energies: list = field(default_factory=list)  # Ritz energy after every half-sweep
    variance: float = np.nan
    max_bond: int = 0
    converged: bool = False
    truncation_errors: list = field(default_factory=list)

    @property
    def energy(self) -> float:
        return self.energies[-1]


def _local_ground(left, w1, w2, right, theta0, krylov_dim, tol):
    shape = theta0.shape
    dim = theta0.size

    def matvec(x):
        t = x.reshape(shape)
        t = np.tensordot(left, t, axes=(2, 0))  # (a', w, s, t, c)
        t = np.tensordot(t, w1, axes=([1, 2], [0, 2]))  # (a', t, c, s', v)
        t = np.tensordot(t, w2, axes=([4, 1], [0, 2]))  # (a', c, s', t', x)
        t = np.tensordot(t, right, axes=([1, 4], [2, 1]))  # (a', s', t', c')
        return t.reshape(-1)

    if dim <= _DENSE_LOCAL:
        heff = np.column_stack([matvec(e) for e in np.eye(dim, dtype=complex)])
        heff = 0.5 * (heff + heff.conj().T)
        vals, vecs = np.linalg.eigh(heff)
        return vals[0], vecs[:, 0].reshape(shape)
    op = LinearOperator((dim, dim), matvec=matvec, dtype=complex)
    v0 = theta0.reshape(-1)
    if not np.any(v0):
        v0 = np.ones(dim, dtype=complex)
    try:
        vals, vecs = eigsh(op, k=1, which="SA", v0=v0, ncv=min(krylov_dim, dim - 1), tol=tol)
    except ArpackNoConvergence as err:
        if len(err.eigenvalues) == 0:
            raise
        vals, vecs = err.eigenvalues, err.eigenvectors
    return float(vals[0]), vecs[:, 0].reshape(shape)


def dmrg_ground_state(ham: Mpo, chi_max: int, sweeps: int = 10, tol: float = 1e-10,
                      initial: Mps | None = None, seed: int = 0, krylov_dim: int = 20,
                      cutoff: float = 1e-14) -> tuple[Mps, DmrgReport]:
    """Two-site DMRG.

    The search is not restricted to a particle-number sector: the default
    initial state is a random MPS, so every sector is present and the
    global minimum is reached. Stops when the energy of two consecutive full
    sweeps differs by less than ``tol``; otherwise the best state is
    returned with ``report.converged = False``.
    """
    if chi_max < 1:
        raise ValueError("chi_max must be >= 1")
    n = ham.n_sites
    if n < 2:
        raise ValueError("DMRG needs at least two sites")
    psi = initial if initial is not None else Mps.random(n, min(chi_max, 8), seed=seed)
    psi = psi.canonicalize(0).normalized()
    ts = [t.copy() for t in psi.tensors]
    left = [np.ones((1, 1, 1), dtype=complex)] + [None] * n
    right = [None] * n + [np.ones((1, 1, 1), dtype=complex)]
    for i in range(n - 1, 0, -1):
        right[i] = _mpo_env_right(right[i + 1], ts[i], ham.tensors[i])
    report = DmrgReport()
    previous = np.inf
    for sweep in range(sweeps):
        for direction in (+1, -1):
            bonds = range(n - 1) if direction > 0 else range(n - 2, -1, -1)
            energy = np.inf
            for i in bonds:
                theta = np.tensordot(ts[i], ts[i + 1], axes=(2, 0))
                energy, theta = _local_ground(left[i], ham.tensors[i], ham.tensors[i + 1],
                                              right[i + 2], theta, krylov_dim, tol * 1e-2)
                chi_l, d1, d2, chi_r = theta.shape
                u, s, vh = _svd(theta.reshape(chi_l * d1, d2 * chi_r))
                k = truncation_rank(s, chi_max, cutoff)
                report.truncation_errors.append(float(np.sum(s[k:] ** 2)))
                s = s[:k] / np.linalg.norm(s[:k])
                if direction > 0:
                    ts[i] = u[:, :k].reshape(chi_l, d1, k)
                    ts[i + 1] = (s[:, None] * vh[:k]).reshape(k, d2, chi_r)
                    left[i + 1] = _mpo_env_left(left[i], ts[i], ham.tensors[i])
                else:
                    ts[i] = (u[:, :k] * s).reshape(chi_l, d1, k)
                    ts[i + 1] = vh[:k].reshape(k, d2, chi_r)
                    right[i + 1] = _mpo_env_right(right[i + 2], ts[i + 1], ham.tensors[i + 1])
            report.energies.append(float(energy))
        logger.debug("sweep %d: E = %.14f", sweep, report.energies[-1])
        if abs(previous - report.energies[-1]) < tol:
            report.converged = True
            break
        previous = report.energies[-1]
    psi = Mps(ts, 0)
    report.max_bond = psi.max_bond
    report.variance = variance(psi, ham)
    if not report.converged:
        logger.warning("DMRG not converged after %d sweeps", sweeps)
    return psi, report
