"""Anderson impurity model with Hubbard-Kanamori interaction.

Spin-orbitals are flattened as ``spin * n_sites + site`` with all spin-up
orbitals first, impurity sites before bath sites, and the bath in chain
order. Under the Jordan-Wigner transform spin-orbital ``p`` is qubit ``p``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pauli import PauliHamiltonian

logger = logging.getLogger(__name__)

UP, DOWN = 0, 1
_SPIN = {"up": UP, "down": DOWN, UP: UP, DOWN: DOWN}


@dataclass(frozen=True, eq=False)
class AimModel:
    """Physical parameters of an Anderson impurity model (all energies in eV).

    ``eps_imp`` is the impurity hopping matrix, ``eps_bath`` the bath hopping
    matrix and ``V[i, j]`` couples impurity orbital ``i`` to bath orbital ``j``.
    """

    eps_imp: np.ndarray
    eps_bath: np.ndarray
    V: np.ndarray
    U: float = 0.0
    J: float = 0.0

    def __post_init__(self):
        eps_imp = np.atleast_2d(np.asarray(self.eps_imp, dtype=complex))
        n_imp = eps_imp.shape[0]
        eps_bath = np.asarray(self.eps_bath, dtype=complex)
        eps_bath = np.atleast_2d(eps_bath) if eps_bath.size else np.zeros((0, 0), dtype=complex)
        n_bath = eps_bath.shape[0]
        V = np.asarray(self.V, dtype=complex).reshape(n_imp, n_bath)
        if n_imp < 1:
            raise ValueError("need at least one impurity orbital")
        if eps_imp.shape != (n_imp, n_imp) or eps_bath.shape != (n_bath, n_bath):
            raise ValueError("hopping matrices must be square")
        for name, m in (("eps_imp", eps_imp), ("eps_bath", eps_bath)):
            if m.size and np.max(np.abs(m - m.conj().T)) > 1e-12:
                raise ValueError(f"{name} is not Hermitian")
        if self.U < 0:
            raise ValueError("U must be non-negative")
        for name, m in (("eps_imp", eps_imp), ("eps_bath", eps_bath), ("V", V)):
            m.setflags(write=False)
            object.__setattr__(self, name, m)
        object.__setattr__(self, "U", float(self.U))
        object.__setattr__(self, "J", float(self.J))

    @property
    def n_imp(self) -> int:
        return self.eps_imp.shape[0]

    @property
    def n_bath(self) -> int:
        return self.eps_bath.shape[0]

    @property
    def n_sites(self) -> int:
        return self.n_imp + self.n_bath

    @property
    def n_qubits(self) -> int:
        return 2 * self.n_sites

    def hopping_matrix(self) -> np.ndarray:
        """One-particle matrix over sites (impurity block first)."""
        return np.block([[self.eps_imp, self.V], [self.V.conj().T, self.eps_bath]])

    def with_bath(self, eps_bath, V) -> "AimModel":
        return AimModel(self.eps_imp, eps_bath, V, self.U, self.J)


@dataclass(frozen=True)
class FermionTerm:
    """``coefficient * prod(ops)`` with ops ``(spin-orbital, dagger)`` left to right."""

    coefficient: complex
    operators: tuple[tuple[int, bool], ...]

    def adjoint(self) -> "FermionTerm":
        return FermionTerm(np.conj(self.coefficient), tuple((p, not d) for p, d in reversed(self.operators)))


@dataclass
class HamiltonianSplit:
    """Quadratic part as a spin-orbital matrix, interaction as fermion terms."""

    h0_single_particle: np.ndarray
    hint_terms: list[FermionTerm] = field(default_factory=list)
    impurity_orbitals: tuple[int, ...] = ()

    @property
    def n_qubits(self) -> int:
        return self.h0_single_particle.shape[0]

    def h0_pauli(self) -> PauliHamiltonian:
        return quadratic_pauli(self.h0_single_particle)

    def hint_pauli(self) -> PauliHamiltonian:
        out = PauliHamiltonian(self.n_qubits)
        for term in self.hint_terms:
            out = out + jordan_wigner(term, self.n_qubits)
        return out


def spin_orbital_index(site: int, spin, n_sites: int) -> int:
    """Flattened index of ``(site, spin)``: up-block then down-block."""
    if not 0 <= site < n_sites:
        raise IndexError(f"site {site} outside 0..{n_sites - 1}")
    return _SPIN[spin] * n_sites + site


def _number(p: int) -> tuple[tuple[int, bool], ...]:
    return ((p, True), (p, False))


def kanamori_terms(U: float, J: float, n_imp: int, n_sites: int | None = None) -> list[FermionTerm]:
    """Hubbard-Kanamori interaction on the impurity orbitals.

    Density-density (``U``, ``U - 2J``, ``U - 3J``), spin-flip and pair-hopping
    monomials; terms with a vanishing coefficient are omitted. Pair hopping is
    emitted together with its Hermitian partner so the sum is Hermitian.
    """
    if n_imp < 1:
        raise ValueError("n_imp must be >= 1")
    n_sites = n_imp if n_sites is None else n_sites
    idx = lambda i, s: spin_orbital_index(i, s, n_sites)  # noqa: E731
    terms: list[FermionTerm] = []

    def add(coeff, ops):
        if coeff != 0.0:
            terms.append(FermionTerm(complex(coeff), tuple(ops)))

    for i in range(n_imp):
        add(U, _number(idx(i, UP)) + _number(idx(i, DOWN)))
    for i in range(n_imp):
        for j in range(i):
            for s in (UP, DOWN):
                sb = 1 - s
                add(U - 2 * J, _number(idx(i, s)) + _number(idx(j, sb)))
                add(U - 3 * J, _number(idx(i, s)) + _number(idx(j, s)))
    for i in range(n_imp):
        for j in range(i):
            for s in (UP, DOWN):
                sb = 1 - s
                add(-J, ((idx(i, s), True), (idx(i, sb), False), (idx(j, sb), True), (idx(j, s), False)))
            hop = FermionTerm(complex(-J), ((idx(i, UP), True), (idx(i, DOWN), True), (idx(j, UP), False), (idx(j, DOWN), False)))
            if J != 0.0:
                terms.extend([hop, hop.adjoint()])
    return terms


def _ladder(p: int, dagger: bool, n_qubits: int) -> PauliHamiltonian:
    if not 0 <= p < n_qubits:
        raise IndexError(f"spin-orbital {p} outside {n_qubits} qubits")
    zstring = (1 << p) - 1
    x = 1 << p
    # c^dag = (X - iY)/2 Z..., c = (X + iY)/2 Z...; Y = iXZ in (x, z) form
    sign = -1j if dagger else 1j
    return PauliHamiltonian(n_qubits, {(x, zstring): 0.5, (x, zstring | x): 0.5 * sign})


def jordan_wigner(term: FermionTerm, n_qubits: int) -> PauliHamiltonian:
    """Jordan-Wigner image of a fermion monomial."""
    out = PauliHamiltonian.identity(n_qubits, term.coefficient)
    for p, dagger in term.operators:
        out = out * _ladder(p, dagger, n_qubits)
    return out


def quadratic_pauli(h: np.ndarray) -> PauliHamiltonian:
    """JW image of ``sum_pq h[p, q] c^dag_p c_q``."""
    n = h.shape[0]
    out = PauliHamiltonian(n)
    for p in range(n):
        for q in range(n):
            if abs(h[p, q]) > 0.0:
                out = out + jordan_wigner(FermionTerm(complex(h[p, q]), ((p, True), (q, False))), n)
    return out


def build_hamiltonian(model: AimModel) -> tuple[PauliHamiltonian, HamiltonianSplit]:
    """Qubit Hamiltonian of the model and its quadratic/interaction split."""
    n_sites = model.n_sites
    h_site = model.hopping_matrix()
    h0 = np.zeros((2 * n_sites, 2 * n_sites), dtype=complex)
    h0[:n_sites, :n_sites] = h_site
    h0[n_sites:, n_sites:] = h_site
    hint = kanamori_terms(model.U, model.J, model.n_imp, n_sites)
    impurity = tuple(spin_orbital_index(i, s, n_sites) for s in (UP, DOWN) for i in range(model.n_imp))
    split = HamiltonianSplit(h0, hint, impurity)
    ham = split.h0_pauli() + split.hint_pauli()
    logger.debug("built %d-qubit Hamiltonian with %d Pauli terms", 2 * n_sites, len(ham))
    return ham, split


def number_operator(n_qubits: int, orbitals=None) -> PauliHamiltonian:
    orbitals = range(n_qubits) if orbitals is None else orbitals
    out = PauliHamiltonian(n_qubits)
    for p in orbitals:
        out = out + jordan_wigner(FermionTerm(1.0, _number(p)), n_qubits)
    return out


def _qr_positive(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q, r = np.linalg.qr(a)
    d = np.diag(r)
    phase = np.ones(len(d), dtype=complex)
    nz = np.abs(d) > 0
    phase[nz] = d[nz] / np.abs(d[nz])
    k = len(d)
    q = q.copy()
    q[:, :k] *= phase
    r = r * phase.conj()[:, None]
    return q, r


def block_tridiagonalize(hopping: np.ndarray, n_imp: int, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Rotate the bath so the one-particle matrix is block tridiagonal.

    Block Lanczos on the bath started from the impurity-bath couplings, with
    full re-orthogonalisation and positive-diagonal QR. The returned
    transform ``T`` is unitary, equals the identity on the impurity block, and
    ``T^dag @ hopping @ T`` has ``n_imp``-sized blocks coupled only to their
    neighbours.
    """
    h = np.asarray(hopping, dtype=complex)
    if h.shape[0] != h.shape[1] or np.max(np.abs(h - h.conj().T), initial=0.0) > 1e-10:
        raise ValueError("hopping matrix must be square and Hermitian")
    n = h.shape[0]
    n_bath = n - n_imp
    if n_bath < 0:
        raise ValueError("n_imp larger than the matrix")
    eps_bath = h[n_imp:, n_imp:]
    scale = max(np.linalg.norm(h), 1.0)
    basis = np.zeros((n_bath, 0), dtype=complex)

    def complement(count):
        # deterministic: orthogonalise unit vectors in index order
        extra = []
        cur = basis
        for k in range(n_bath):
            v = np.zeros(n_bath, dtype=complex)
            v[k] = 1.0
            for _ in range(2):
                v -= cur @ (cur.conj().T @ v)
            if np.linalg.norm(v) > 1e-6:
                v /= np.linalg.norm(v)
                cur = np.column_stack([cur, v])
                extra.append(v)
                if len(extra) == count:
                    break
        return np.array(extra).T.reshape(n_bath, -1)

    w = h[n_imp:, :n_imp].copy()
    while basis.shape[1] < n_bath:
        for _ in range(2):
            w -= basis @ (basis.conj().T @ w)
        width = min(n_imp, n_bath - basis.shape[1])
        q, r = _qr_positive(w)
        q = q[:, :width]
        weak = [k for k in range(width) if k >= r.shape[0] or abs(r[k, k]) < tol * scale]
        if weak:
            keep = [k for k in range(width) if k not in weak]
            q = np.column_stack([q[:, keep], complement(len(weak))]) if keep else complement(width)
        basis = np.column_stack([basis, q])
        w = eps_bath @ q
    T = np.eye(n, dtype=complex)
    T[n_imp:, n_imp:] = basis
    return T.conj().T @ h @ T, T


# -- model file ---------------------------------------------------------------

def _write_matrix(fh, name: str, m: np.ndarray) -> None:
    fh.write(f"{name} {m.shape[0]} {m.shape[1]}\n")
    for row in m:
        fh.write(" ".join(f"{v.real:.17g} {v.imag:.17g}" for v in row) + "\n")


def write_model(model: AimModel, path) -> None:
    """Write the model in the plain-text model format (see README)."""
    with open(path, "w") as fh:
        fh.write(f"n_imp {model.n_imp}\nn_bath {model.n_bath}\n")
        fh.write(f"U {model.U:.17g}\nJ {model.J:.17g}\n")
        _write_matrix(fh, "eps_imp", model.eps_imp)
        _write_matrix(fh, "eps_bath", model.eps_bath)
        _write_matrix(fh, "V", model.V)


def read_model(path) -> AimModel:
    lines = [ln.split("#")[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    scalars: dict[str, float] = {}
    mats: dict[str, np.ndarray] = {}
    i = 0
    while i < len(lines):
        tok = lines[i].split()
        key = tok[0]
        if key in ("eps_imp", "eps_bath", "V"):
            rows, cols = int(tok[1]), int(tok[2])
            data = [list(map(float, lines[i + 1 + r].split())) for r in range(rows)]
            arr = np.array(data, dtype=float).reshape(rows, 2 * cols) if rows else np.zeros((0, 2 * cols))
            mats[key] = arr[:, 0::2] + 1j * arr[:, 1::2]
            i += 1 + rows
        elif key in ("n_imp", "n_bath", "U", "J"):
            scalars[key] = float(tok[1])
            i += 1
        else:
            raise ValueError(f"unknown key {key!r} in model file")
    n_imp, n_bath = int(scalars["n_imp"]), int(scalars["n_bath"])
    model = AimModel(
        mats["eps_imp"],
        mats.get("eps_bath", np.zeros((n_bath, n_bath))),
        mats.get("V", np.zeros((n_imp, n_bath))),
        scalars.get("U", 0.0),
        scalars.get("J", 0.0),
    )
    if model.n_imp != n_imp or model.n_bath != n_bath:
        raise ValueError("matrix blocks disagree with n_imp/n_bath")
    return model


# -- built-in instances -----------------------------------------------------

def hubbard_atom(U: float) -> AimModel:
    """Single impurity orbital at half filling, no bath."""
    return AimModel([[-U / 2]], np.zeros((0, 0)), np.zeros((1, 0)), U)


def resonant_level(eps: float = 0.0, eps_bath: float = 0.0, V: float = 0.5) -> AimModel:
    """Noninteracting impurity coupled to a single bath level."""
    return AimModel([[eps]], [[eps_bath]], [[V]], 0.0)


def star_model(eps_imp: float, bath_energies, couplings, U: float = 0.0, J: float = 0.0) -> AimModel:
    """Single-orbital model with a diagonal (star-geometry) bath."""
    bath_energies = np.asarray(bath_energies, dtype=float)
    return AimModel([[eps_imp]], np.diag(bath_energies), np.asarray(couplings, dtype=float)[None, :], U, J)


def small_aim(U: float = 4.0) -> AimModel:
    """One half-filled impurity with three chain-free bath levels (8 qubits).

    The bath is a three-pole discretisation of the semicircular hybridization.
    """
    return star_model(-U / 2, [-0.4803, 0.0, 0.4803], [0.6279, 0.1788, 0.6279], U)
