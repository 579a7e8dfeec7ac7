"""Green's functions from a time-evolved Krylov basis.

The basis is ``|psi_k> = U(dt)^k |phi_0>`` for ``k = -n_l .. n_l`` with
``|phi_0> = d^dag |GS>`` (greater branch) or ``d |GS>`` (lesser branch).
Overlap and Hamiltonian matrices in this non-orthogonal basis are reduced
to a continued fraction by Lanczos in the S metric. Energies are measured
from a reference ``e_ref`` (the exact ground-state energy, or the energy of
the prepared circuit state).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .emulator import Statevector, TrotterPropagator, apply_ladder

GREATER, LESSER = "greater", "lesser"
ENERGY_REFERENCES = ("mps_exact", "circuit")

Orbital = Union[int, Sequence[tuple[int, complex]]]


@dataclass(frozen=True)
class QsegConfig:
    dt: float = 0.05
    n_l: int = 100
    n_T: int = 1
    toeplitz_H: bool = False
    s_regularization: float = 1e-10
    energy_reference: str = "mps_exact"
    delta: float = 0.1

    def __post_init__(self):
        if self.n_l < 1:
            raise ValueError("n_l must be >= 1")
        if not 0 < self.s_regularization < 1:
            raise ValueError("s_regularization must lie in (0, 1)")
        if self.energy_reference not in ENERGY_REFERENCES:
            raise ValueError(f"energy_reference must be one of {ENERGY_REFERENCES}")
        if self.dt <= 0 or self.n_T < 1:
            raise ValueError("need dt > 0 and n_T >= 1")


@dataclass
class KrylovData:
    S: np.ndarray
    H: np.ndarray  # already shifted by -e_ref * S
    branch: str
    orbital: Orbital
    b0_sq: float
    e_ref: float
    degenerate: bool = False


@dataclass
class ContinuedFraction:
    """``prefactor / (z -+ a_0 - b_1^2 / (z -+ a_1 - ...))``.

    The sign in front of ``a_i`` is ``-`` for the greater branch and ``+``
    for the lesser branch.
    """

    a: np.ndarray
    b_sq: np.ndarray  # b_1^2 .. b_{n-1}^2
    prefactor: float
    branch: str
    e_ref: float = 0.0
    truncated: bool = False

    @property
    def depth(self) -> int:
        return len(self.a)

    @property
    def sign(self) -> int:
        return 1 if self.branch == GREATER else -1

    def __call__(self, z):
        return eval_continued_fraction(self, z)


class PoleError(ZeroDivisionError):
    """Continued fraction evaluated on one of its poles."""


def combination_ladder(orbital: Orbital, dagger: bool, state: Statevector) -> Statevector:
    """Apply ``d^dag = sum_a w_a c^dag_a`` (or ``d = sum_a conj(w_a) c_a``)."""
    if isinstance(orbital, (int, np.integer)):
        return apply_ladder(int(orbital), dagger, state)
    out = np.zeros_like(state.amplitudes)
    for a, w in orbital:
        coeff = w if dagger else np.conj(w)
        out += coeff * apply_ladder(a, dagger, state).amplitudes
    return Statevector(out)


def _start_vector(gs: Statevector, orbital: Orbital, branch: str) -> Statevector:
    if branch not in (GREATER, LESSER):
        raise ValueError(f"unknown branch {branch}")
    return combination_ladder(orbital, branch == GREATER, gs)


def _toeplitz(first_row: np.ndarray) -> np.ndarray:
    """Hermitian Toeplitz matrix with ``M[i, j] = r[j - i]`` for ``j >= i``."""
    n = len(first_row)
    idx = np.arange(n)
    diff = idx[None, :] - idx[:, None]
    return np.where(diff >= 0, first_row[np.abs(diff)], np.conj(first_row[np.abs(diff)]))


def build_krylov_matrices(gs: Statevector, e_ref: float, orbital: Orbital, branch: str,
                          cfg: QsegConfig, prop: TrotterPropagator, hamiltonian=None) -> KrylovData:
    """Overlap and (shifted) Hamiltonian matrices of the time-evolved basis.

    ``S_ij = <phi_0|U^(j-i)|phi_0>`` is built from ``2 n_l + 1`` overlaps, so
    it is Toeplitz by construction. ``H_ij = <psi_i|H|psi_j>`` is computed
    for every pair, or, with ``cfg.toeplitz_H``, approximated by
    ``<H phi_0|U^(j-i) phi_0>``.
    """
    if abs(gs.norm() - 1) > 1e-8:
        raise ValueError("ground state must be normalised")
    if abs(prop.dt - cfg.dt) > 1e-15 or prop.n_T != cfg.n_T:
        raise ValueError("propagator does not match the configuration")
    ham = hamiltonian if hamiltonian is not None else prop.split.h0_pauli() + prop.split.hint_pauli()
    phi0 = _start_vector(gs, orbital, branch).amplitudes
    b0_sq = float(np.vdot(phi0, phi0).real)
    size = 2 * cfg.n_l + 1
    if b0_sq < 1e-14:
        zero = np.zeros((size, size), dtype=complex)
        return KrylovData(zero, zero.copy(), branch, orbital, 0.0, e_ref, degenerate=True)
    forward = [phi0]
    for _ in range(2 * cfg.n_l if cfg.toeplitz_H else cfg.n_l):
        forward.append(prop.apply_vector(forward[-1]))
    if cfg.toeplitz_H:
        s_row = np.array([np.vdot(phi0, v) for v in forward])
        h_phi0 = ham.apply(phi0)
        h_row = np.array([np.vdot(h_phi0, v) for v in forward])
        S = _toeplitz(s_row)
        H = _toeplitz(h_row)
    else:
        backward = [phi0]
        for _ in range(cfg.n_l):
            backward.append(prop.apply_vector(backward[-1], inverse=True))
        basis = np.array(backward[:0:-1] + forward)  # k = -n_l .. n_l
        # S from its first row: <psi_{-n_l}|psi_j> = <phi_0|U^(j + n_l)|phi_0>
        s_row = np.conj(basis.conj() @ basis[0])
        S = _toeplitz(s_row)
        h_basis = np.array([ham.apply(v) for v in basis])
        H = basis.conj() @ h_basis.T
        H = 0.5 * (H + H.conj().T)
    return KrylovData(S, H - e_ref * S, branch, orbital, b0_sq, e_ref)


def lanczos_from_matrices(k: KrylovData, reg: float = 1e-10, breakdown: float = 1e-12) -> ContinuedFraction:
    """Continued fraction from ``(S, H)`` by Lanczos in the S metric.

    Eigenvalues of ``S`` below ``reg * lambda_max`` are discarded; the
    remaining eigenvectors give an orthonormal basis in which the shifted
    Hamiltonian is tridiagonalised (full re-orthogonalisation) starting from
    ``phi_0``. The recursion stops at the first ``b_i^2`` below
    ``breakdown * max(b^2)``. The prefactor is ``<phi_0|phi_0> = S_00``.
    """
    if k.degenerate:
        return ContinuedFraction(np.zeros(1), np.zeros(0), 0.0, k.branch, k.e_ref)
    S = 0.5 * (k.S + k.S.conj().T)
    H = 0.5 * (k.H + k.H.conj().T)
    lam, vec = np.linalg.eigh(S)
    lam_max = lam[-1]
    if lam[0] < -1e-6 * lam_max:
        raise ValueError(f"overlap matrix is not positive semidefinite (min eigenvalue {lam[0]:.3e})")
    keep = lam > reg * lam_max
    x = vec[:, keep] / np.sqrt(lam[keep])
    hp = x.conj().T @ H @ x
    hp = 0.5 * (hp + hp.conj().T)
    centre = (S.shape[0] - 1) // 2
    start = x.conj().T @ S[:, centre]
    start = start / np.linalg.norm(start)
    a, b_sq = _lanczos(hp, start, hp.shape[0], breakdown)
    return ContinuedFraction(a, b_sq, float(S[centre, centre].real), k.branch, k.e_ref,
                             truncated=len(a) < hp.shape[0])


def _lanczos(matvec_or_matrix, start: np.ndarray, max_depth: int, breakdown: float = 1e-12):
    """Hermitian Lanczos with full re-orthogonalisation; returns ``(a, b^2)``."""
    apply = (lambda v: matvec_or_matrix @ v) if isinstance(matvec_or_matrix, np.ndarray) else matvec_or_matrix
    basis = np.zeros((max_depth, start.size), dtype=complex)
    basis[0] = start / np.linalg.norm(start)
    a, b_sq = [], []
    max_b = 0.0
    for i in range(max_depth):
        w = apply(basis[i])
        a.append(float(np.vdot(basis[i], w).real))
        done = basis[:i + 1]
        for _ in range(2):
            w = w - done.T @ (done @ w.conj()).conj()
        if i == max_depth - 1:
            break
        b2 = float(np.vdot(w, w).real)
        max_b = max(max_b, b2)
        if b2 < breakdown * max_b or b2 < 1e-28:
            break
        b_sq.append(b2)
        basis[i + 1] = w / np.sqrt(b2)
    return np.array(a), np.array(b_sq)


def eval_continued_fraction(cf: ContinuedFraction, z):
    """Bottom-up evaluation; vectorised over ``z``."""
    z = np.asarray(z, dtype=complex)
    if cf.prefactor == 0:
        return np.zeros_like(z)
    s = cf.sign
    t = z - s * cf.a[-1]
    for i in range(cf.depth - 2, -1, -1):
        if np.any(np.abs(t) < 1e-300):
            raise PoleError("continued fraction evaluated on a pole")
        t = z - s * cf.a[i] - cf.b_sq[i] / t
    if np.any(np.abs(t) < 1e-300):
        raise PoleError("continued fraction evaluated on a pole")
    return cf.prefactor / t


def retarded_gf(greater: ContinuedFraction, lesser: ContinuedFraction, z):
    return eval_continued_fraction(greater, z) + eval_continued_fraction(lesser, z)


@dataclass
class DosCurve:
    omega: np.ndarray
    values: np.ndarray
    delta: float

    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.omega))


def dos(g: Callable, grid: np.ndarray, delta: float = 0.1) -> DosCurve:
    """``-(1/pi) Im G(w + i delta)`` on ``grid``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    grid = np.asarray(grid, dtype=float)
    vals = np.asarray(g(grid + 1j * delta))
    return DosCurve(grid, -vals.imag / np.pi, delta)


def default_grid(lo: float = -10.0, hi: float = 10.0, points: int = 2001) -> np.ndarray:
    return np.linspace(lo, hi, points)


def offdiagonal_gf(g1: tuple, g2: tuple, diag_a: tuple, diag_b: tuple, z):
    """Off-diagonal element from diagonal-type calculations.

    ``g1`` and ``g2`` are ``(greater, lesser)`` pairs computed for the
    combinations ``d^dag = c^dag_a + c^dag_b`` and ``c^dag_a + i c^dag_b``;
    ``diag_a``/``diag_b`` are the pairs of the two orbitals. Returns
    ``G_ab(z) = 1/2 (G1 - i G2 + (i - 1)(G_aa + G_bb))``, the element with
    ``c_a`` on the left and ``c^dag_b`` on the right.
    """
    refs = {cf.e_ref for pair in (g1, g2, diag_a, diag_b) for cf in pair}
    if max(refs) - min(refs) > 1e-12:
        raise ValueError("inputs use different energy references")
    ev = lambda pair: retarded_gf(pair[0], pair[1], z)  # noqa: E731
    return 0.5 * (ev(g1) - 1j * ev(g2) + (1j - 1) * (ev(diag_a) + ev(diag_b)))


@dataclass
class GreensFunction:
    """Greater/lesser continued fractions per orbital label."""

    branches: dict = field(default_factory=dict)  # label -> (greater, lesser)
    e_ref: float = 0.0

    def retarded(self, label, z):
        g, l = self.branches[label]
        return retarded_gf(g, l, z)

    def dos(self, label, grid, delta=0.1) -> DosCurve:
        return dos(lambda z: self.retarded(label, z), grid, delta)


def qseg_green_function(gs: Statevector, e_ref: float, orbitals: Sequence[Orbital], cfg: QsegConfig,
                        prop: TrotterPropagator, hamiltonian=None) -> GreensFunction:
    gf = GreensFunction(e_ref=e_ref)
    for orb in orbitals:
        pair = []
        for branch in (GREATER, LESSER):
            kd = build_krylov_matrices(gs, e_ref, orb, branch, cfg, prop, hamiltonian)
            pair.append(lanczos_from_matrices(kd, cfg.s_regularization))
        gf.branches[orb if isinstance(orb, (int, np.integer)) else tuple(orb)] = tuple(pair)
    return gf


# -- files ------------------------------------------------------------------------------

def write_gf(path, omega: np.ndarray, gfs: dict, delta: float) -> None:
    """Columns ``w`` then ``Re G, Im G, DOS`` per orbital, 12 significant digits.

    ``gfs`` maps an orbital label to ``G(w + i delta)`` sampled on ``omega``.
    """
    labels = list(gfs)
    with open(path, "w") as fh:
        fh.write(f"# delta {delta:.12g}\n")
        fh.write("# omega " + " ".join(f"ReG[{l}] ImG[{l}] DOS[{l}]" for l in labels) + "\n")
        for i, w in enumerate(omega):
            cols = [f"{w:.12g}"]
            for l in labels:
                g = complex(gfs[l][i])
                cols += [f"{g.real:.12g}", f"{g.imag:.12g}", f"{-g.imag / np.pi:.12g}"]
            fh.write(" ".join(cols) + "\n")


def read_gf(path) -> tuple[np.ndarray, np.ndarray]:
    """Returns ``(omega, columns)`` where columns holds ``Re, Im, DOS`` triples."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    return data[:, 0], data[:, 1:]


def write_continued_fractions(path, gf: GreensFunction) -> None:
    """Plain-text dump of every continued fraction (17 significant digits)."""
    with open(path, "w") as fh:
        fh.write(f"e_ref {gf.e_ref:.17g}\n")
        for label, pair in gf.branches.items():
            for cf in pair:
                fh.write(f"orbital {label} branch {cf.branch} depth {cf.depth} prefactor {cf.prefactor:.17g}\n")
                for i, a in enumerate(cf.a):
                    b2 = cf.b_sq[i - 1] if i > 0 else 0.0
                    fh.write(f"{i} {a:.17g} {b2:.17g}\n")


def compare_dos(a: np.ndarray, b: np.ndarray, omega: np.ndarray) -> tuple[float, float]:
    """Max-abs deviation and relative L2 deviation ``||a-b|| / ||b||`` on ``omega``."""
    diff = np.abs(a - b)
    l2 = np.sqrt(np.trapezoid(diff ** 2, omega) / np.trapezoid(np.asarray(b) ** 2, omega))
    return float(diff.max()), float(l2)
