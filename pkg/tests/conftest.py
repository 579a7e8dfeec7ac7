import numpy as np
import pytest

from aimqc.dmrg import dmrg_ground_state
from aimqc.ed import ed_ground_state
from aimqc.model import build_hamiltonian, small_aim
from aimqc.mps import Mpo


@pytest.fixture(scope="session")
def aim():
    """Eight-qubit half-filled model used throughout: (model, H, split, mpo)."""
    model = small_aim(4.0)
    ham, split = build_hamiltonian(model)
    return model, ham, split, Mpo.from_pauli(ham)


@pytest.fixture(scope="session")
def aim_ground(aim):
    _, _, _, mpo = aim
    psi, report = dmrg_ground_state(mpo, 16, sweeps=20, tol=1e-12)
    return psi, report


@pytest.fixture(scope="session")
def aim_ed(aim):
    return ed_ground_state(aim[1])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_unitary(dim, rng):
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


ACCEPTANCE: dict = {}


def report_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
