"""Fidelity and energy error of variational staircase circuits, layer by layer.

The energy error of the prepared state shrinks as the fidelity approaches 1.
"""

from aimqc.compiler import hybrid_compile, variational_compile
from aimqc.dmrg import dmrg_ground_state
from aimqc.model import build_hamiltonian, small_aim
from aimqc.mps import Mpo

ham, _ = build_hamiltonian(small_aim(4.0))
mpo = Mpo.from_pauli(ham)
psi, dmrg = dmrg_ground_state(mpo, chi_max=16, sweeps=20, tol=1e-12)

for n_g in (2, 3):
    _, reports = variational_compile(psi, n_g=n_g, max_layers=6, f_target=0.9999, hamiltonian=mpo)
    print(f"n_g = {n_g}")
    for r in reports:
        print(f"  layers {r.n_layers}: F = {r.fidelity:.5f}  dE = {r.energy_qc - dmrg.energy:.5f} eV"
              f"  CNOTs ~ {r.cnot_count}")

circuit, rep = hybrid_compile(psi, 0.99, mpo)
print(f"hybrid: {len(circuit)} gates, F = {rep.fidelity:.5f}, dE = {rep.energy_qc - dmrg.energy:.5f} eV, "
      f"CNOTs <= {rep.cnot_count}")
