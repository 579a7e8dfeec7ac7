"""Bath discretisation on the Matsubara axis and the Bethe-lattice DMFT loop."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from .model import AimModel

logger = logging.getLogger(__name__)


def matsubara_grid(beta_f: float, n_matsubara: int) -> np.ndarray:
    """Fermionic frequencies ``(2n + 1) pi / beta_f`` for ``n < n_matsubara``."""
    if beta_f <= 0:
        raise ValueError("beta_f must be positive")
    return (2 * np.arange(n_matsubara) + 1) * np.pi / beta_f


@dataclass
class BathParams:
    """Discrete bath: on-site/hopping matrix ``eps_bath`` and couplings ``V``."""

    eps_bath: np.ndarray
    V: np.ndarray
    converged: bool = True

    def __post_init__(self):
        self.eps_bath = np.atleast_2d(np.asarray(self.eps_bath, dtype=complex)) if np.size(self.eps_bath) else np.zeros((0, 0), complex)
        self.V = np.asarray(self.V, dtype=complex).reshape(-1, self.eps_bath.shape[0])
        if np.max(np.abs(self.eps_bath - self.eps_bath.conj().T), initial=0.0) > 1e-10:
            raise ValueError("eps_bath must be Hermitian")
        if not (np.all(np.isfinite(self.eps_bath)) and np.all(np.isfinite(self.V))):
            raise ValueError("bath parameters must be finite")

    @property
    def n_bath(self) -> int:
        return self.eps_bath.shape[0]

    @classmethod
    def from_poles(cls, energies, couplings) -> "BathParams":
        return cls(np.diag(np.asarray(energies, dtype=float)), np.asarray(couplings, dtype=float)[None, :])

    def sorted_poles(self) -> tuple[np.ndarray, np.ndarray]:
        """On-site energies (ascending) and coupling magnitudes of a star bath, channel 0."""
        e = np.real(np.diag(self.eps_bath))
        order = np.argsort(e, kind="stable")
        return e[order], np.abs(self.V[0])[order]


def discrete_hybridization(bath: BathParams, z: complex) -> np.ndarray:
    """``V (z - eps_bath)^-1 V^dag`` as an ``n_imp x n_imp`` matrix."""
    n = bath.n_bath
    if n == 0:
        return np.zeros((bath.V.shape[0],) * 2, dtype=complex)
    resolvent = z * np.eye(n) - bath.eps_bath
    evals = np.linalg.eigvalsh(bath.eps_bath)
    hit = np.abs(evals - z) < 1e-13 * max(1.0, abs(z))
    if np.any(hit):
        raise ZeroDivisionError(f"z = {z} coincides with bath eigenvalue {evals[hit][0]}")
    return bath.V @ np.linalg.solve(resolvent, bath.V.conj().T)


def bethe_hybridization(z):
    """Hilbert transform of the semicircle ``sqrt(4 - w^2) / (2 pi)``.

    Closed form ``(z - sqrt(z - 2) sqrt(z + 2)) / 2``; the product of principal
    square roots puts the branch cut on ``[-2, 2]``.
    """
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag == 0):
        raise ValueError("the Bethe hybridization is evaluated off the real axis only")
    return 0.5 * (z - np.sqrt(z - 2) * np.sqrt(z + 2))


# alias under the name used for the Matsubara-axis evaluator
bethe_hybridization_matsubara = bethe_hybridization


def bethe_hybridization_quadrature(z: complex) -> complex:
    """Independent check of :func:`bethe_hybridization` by adaptive quadrature."""
    dens = lambda w: np.sqrt(4 - w * w) / (2 * np.pi)  # noqa: E731
    re = integrate.quad(lambda w: (dens(w) / (z - w)).real, -2, 2, epsabs=1e-13, epsrel=1e-13, limit=400)[0]
    im = integrate.quad(lambda w: (dens(w) / (z - w)).imag, -2, 2, epsabs=1e-13, epsrel=1e-13, limit=400)[0]
    return re + 1j * im


@dataclass
class HybridizationTarget:
    """Hybridization to be discretised, evaluated on ``i w_n``.

    Either ``evaluator`` (a callable ``z -> n_imp x n_imp`` array or scalar)
    or tabulated ``samples`` on the Matsubara grid must be given.
    """

    evaluator: Optional[Callable] = None
    beta_f: float = 200.0
    n_matsubara: int = 100
    samples: Optional[np.ndarray] = None

    def frequencies(self) -> np.ndarray:
        return matsubara_grid(self.beta_f, self.n_matsubara)

    def values(self) -> np.ndarray:
        """Target on the grid, shape ``(n_matsubara, n_imp, n_imp)``."""
        if self.samples is not None:
            vals = np.asarray(self.samples, dtype=complex)
        else:
            vals = np.array([self.evaluator(1j * w) for w in self.frequencies()], dtype=complex)
        if vals.ndim == 1:
            vals = vals[:, None, None]
        if vals.shape[0] != self.n_matsubara:
            raise ValueError("tabulated target does not match n_matsubara")
        return vals


WEIGHTINGS = ("uniform", "inverse_frequency")


def matsubara_weights(weighting, omega: np.ndarray) -> np.ndarray:
    """Per-frequency weights of the fit distance.

    ``"uniform"`` gives the plain sum of squared residuals. ``"inverse_frequency"``
    divides each term by ``w_n``, which emphasises the low-energy part of the
    grid. An explicit array is passed through unchanged.
    """
    if weighting is None or (isinstance(weighting, str) and weighting == "uniform"):
        return np.ones(len(omega))
    if isinstance(weighting, str):
        if weighting == "inverse_frequency":
            return 1.0 / np.abs(np.asarray(omega, dtype=float))
        raise ValueError(f"unknown weighting {weighting!r}; expected one of {WEIGHTINGS}")
    w = np.asarray(weighting, dtype=float)
    if w.shape != (len(omega),) or np.any(w < 0):
        raise ValueError("explicit weights must be non-negative with one entry per frequency")
    return w


def _pole_model(params: np.ndarray, z: np.ndarray):
    n = params.size // 2
    eps, v = params[:n], params[n:]
    inv = 1.0 / (z[:, None] - eps[None, :])
    delta = inv @ (v * v)
    return delta, inv, eps, v


def _distance_and_grad(params, z, target, weights):
    n = params.size // 2
    delta, inv, eps, v = _pole_model(params, z)
    resid = delta - target
    dist = float(np.sum(weights * np.abs(resid) ** 2))
    wr = weights * resid.conj()
    d_eps = 2 * np.real(wr @ (inv * inv)) * v * v
    d_v = 2 * np.real(wr @ inv) * 2 * v
    grad = np.concatenate([d_eps, d_v]) if n else np.zeros(0)
    return dist, grad


@dataclass
class _ChannelFit:
    energies: np.ndarray
    couplings: np.ndarray
    distance: float
    converged: bool
    history: list = field(default_factory=list)


def _fit_channel(z, target, n_bath, restarts, seed, weights, init=None, maxiter=5000) -> _ChannelFit:
    if n_bath == 0:
        return _ChannelFit(np.zeros(0), np.zeros(0), float(np.sum(weights * np.abs(target) ** 2)), True)
    # first moment of the target sets the coupling scale
    m0 = max(float(np.real(-z[-1].imag * target[-1].imag)), 1e-3)
    width = 2.0 * max(1.0, np.sqrt(m0))
    starts = []
    if init is not None:
        starts.append(np.asarray(init, dtype=float))
    sym = np.linspace(-width, width, n_bath)
    starts.append(np.concatenate([sym, np.full(n_bath, np.sqrt(m0 / n_bath))]))
    for r in range(1, max(restarts, 1)):
        rng = np.random.default_rng([seed, r])
        eps0 = np.sort(rng.uniform(-width, width, n_bath))
        v0 = np.sqrt(m0 / n_bath) * rng.uniform(0.5, 1.5, n_bath)
        starts.append(np.concatenate([eps0, v0]))
    best: Optional[_ChannelFit] = None
    for p0 in starts:
        history = []
        res = optimize.minimize(
            _distance_and_grad, p0, args=(z, target, weights), jac=True, method="BFGS",
            callback=lambda xk: history.append(_distance_and_grad(xk, z, target, weights)[0]),
            options={"gtol": 1e-12, "maxiter": maxiter},
        )
        # BFGS often stops on precision loss right at the minimum; accept that
        # when the gradient is negligible on the scale of the target
        scale = float(np.sum(weights * np.abs(target) ** 2))
        ok = res.success or res.fun < 1e-20 or np.linalg.norm(res.jac) < 1e-6 * max(scale, 1e-12)
        fit = _ChannelFit(res.x[:n_bath].copy(), res.x[n_bath:].copy(), float(res.fun), bool(ok), history)
        if best is None or fit.distance < best.distance - 1e-15:
            best = fit
    return best


def fit_bath(
    target: HybridizationTarget,
    n_bath: int,
    restarts: int = 32,
    seed: int = 0,
    weighting="uniform",
    init: Optional[BathParams] = None,
) -> tuple[BathParams, float]:
    """Fit a star bath to the target on the Matsubara axis.

    Minimises ``D = sum_n ||Delta_disc(i w_n) - Delta(i w_n)||_F^2`` over
    on-site energies and real couplings (optionally weighted per frequency,
    see :func:`matsubara_weights`) by BFGS with an analytic gradient,
    keeping the best of the symmetric start plus ``restarts`` random ones
    (and ``init`` if given, used as a warm start). For several impurity
    orbitals each diagonal channel receives its own ``n_bath`` bath levels.

    Returns:
        (BathParams, D). ``BathParams.converged`` is False if the winning
        minimisation hit its iteration limit.
    """
    if n_bath < 0:
        raise ValueError("n_bath must be >= 0")
    z = 1j * target.frequencies()
    vals = target.values()
    n_imp = vals.shape[1]
    w = matsubara_weights(weighting, target.frequencies())
    energies, couplings = [], []
    dist = 0.0
    converged = True
    for ch in range(n_imp):
        start = None
        if init is not None and init.n_bath == n_imp * n_bath:
            sl = slice(ch * n_bath, (ch + 1) * n_bath)
            start = np.concatenate([np.real(np.diag(init.eps_bath))[sl], np.real(init.V[ch, sl])])
        fit = _fit_channel(z, vals[:, ch, ch], n_bath, restarts, seed + 7919 * ch, w, start)
        energies.append(fit.energies)
        couplings.append(fit.couplings)
        dist += fit.distance
        converged &= fit.converged
    # off-diagonal target entries are not fitted; they still count in D
    for a in range(n_imp):
        for b in range(n_imp):
            if a != b:
                dist += float(np.sum(w * np.abs(vals[:, a, b]) ** 2))
    eps = np.diag(np.concatenate(energies)) if n_bath else np.zeros((0, 0))
    V = np.zeros((n_imp, n_imp * n_bath))
    for ch in range(n_imp):
        V[ch, ch * n_bath:(ch + 1) * n_bath] = couplings[ch]
    if not converged:
        warnings.warn("bath fit did not converge; returning best parameters found", RuntimeWarning)
    return BathParams(eps, V, converged), dist


def fit_distance(bath: BathParams, target: HybridizationTarget, weighting="uniform") -> float:
    vals = target.values()
    omega = target.frequencies()
    w = matsubara_weights(weighting, omega)
    return float(sum(w[n] * np.sum(np.abs(discrete_hybridization(bath, 1j * wn) - vals[n]) ** 2)
                     for n, wn in enumerate(omega)))


# -- DMFT on the Bethe lattice --------------------------------------------------

GfSolver = Callable[[AimModel, np.ndarray], np.ndarray]


def noninteracting_solver(model: AimModel, z: np.ndarray) -> np.ndarray:
    """Impurity GF of the ``U = 0`` problem, ``[z - eps - Delta(z)]^-1`` (orbital 0)."""
    h = model.hopping_matrix()
    return np.array([np.linalg.inv(zz * np.eye(h.shape[0]) - h)[0, 0] for zz in z])


@dataclass
class DmftState:
    iteration: int
    bath: BathParams
    gf: Optional[np.ndarray]
    distance: float
    beta_f: float = 100.0
    n_matsubara: int = 100
    converged: bool = False
    gf_change: float = np.inf


def bethe_initial_state(n_bath: int, beta_f: float = 100.0, n_matsubara: int = 100,
                        restarts: int = 32, seed: int = 0, weighting="uniform") -> DmftState:
    """Bath fitted to the noninteracting semicircular hybridization."""
    target = HybridizationTarget(bethe_hybridization, beta_f, n_matsubara)
    bath, dist = fit_bath(target, n_bath, restarts, seed, weighting)
    return DmftState(0, bath, None, dist, beta_f, n_matsubara)


def dmft_step(state: DmftState, solver: GfSolver, U: float, mixing: float = 0.7,
              restarts: int = 8, seed: int = 0, tol: float = 1e-5, weighting="uniform") -> DmftState:
    """One self-consistency cycle: solve the impurity, set ``Delta_new = G``, refit."""
    model = AimModel([[-U / 2]], state.bath.eps_bath, state.bath.V, U)
    wn = matsubara_grid(state.beta_f, state.n_matsubara)
    gf = np.asarray(solver(model, 1j * wn), dtype=complex)
    old_delta = np.array([discrete_hybridization(state.bath, 1j * w)[0, 0] for w in wn])
    target_vals = mixing * gf + (1 - mixing) * old_delta
    target = HybridizationTarget(None, state.beta_f, state.n_matsubara, samples=target_vals)
    bath, dist = fit_bath(target, state.bath.n_bath, restarts, seed, weighting, init=state.bath)
    change = np.inf if state.gf is None else float(np.max(np.abs(gf - state.gf)))
    logger.info("DMFT iteration %d: D = %.3e, max |dG| = %.3e", state.iteration + 1, dist, change)
    return DmftState(state.iteration + 1, bath, gf, dist, state.beta_f, state.n_matsubara, change < tol, change)


def run_dmft(U: float, n_bath: int, solver: GfSolver, beta_f: float = 100.0, n_matsubara: int = 100,
             max_iter: int = 30, tol: float = 1e-5, mixing: float = 0.7, seed: int = 0,
             state: Optional[DmftState] = None, weighting="uniform") -> list[DmftState]:
    """Iterate :func:`dmft_step` until the Matsubara GF changes by less than ``tol``."""
    state = state or bethe_initial_state(n_bath, beta_f, n_matsubara, seed=seed, weighting=weighting)
    history = [state]
    for _ in range(max_iter):
        state = dmft_step(state, solver, U, mixing, seed=seed, tol=tol, weighting=weighting)
        history.append(state)
        if state.converged:
            break
    return history


# -- hybridization file -----------------------------------------------------------

def write_hybridization(path, omega: np.ndarray, values: np.ndarray) -> None:
    """Columns ``w_n`` then ``Re``/``Im`` pairs for each matrix entry (row-major)."""
    values = np.asarray(values, dtype=complex).reshape(len(omega), -1)
    with open(path, "w") as fh:
        for w, row in zip(omega, values):
            fh.write(f"{w:.17g} " + " ".join(f"{v.real:.17g} {v.imag:.17g}" for v in row) + "\n")


def read_hybridization(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, ndmin=2)
    omega = data[:, 0]
    vals = data[:, 1::2] + 1j * data[:, 2::2]
    n = int(round(np.sqrt(vals.shape[1])))
    return omega, vals.reshape(len(omega), n, n)
