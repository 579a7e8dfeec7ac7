"""Impurity DOS of the 8-qubit model: DMRG ground state, ladder circuit, QSEG vs ED.

Run with ``python3 demos/greens_function.py``; writes gf_qseg.dat and gf_ed.dat
to the current directory.
"""

import numpy as np

from aimqc.compiler import exact_ladder
from aimqc.dmrg import dmrg_ground_state
from aimqc.ed import ed_green_functions, ed_ground_state
from aimqc.emulator import Statevector, apply_circuit, make_propagator
from aimqc.gf import QsegConfig, compare_dos, default_grid, qseg_green_function, write_gf
from aimqc.model import build_hamiltonian, small_aim
from aimqc.mps import Mpo

model = small_aim(U=4.0)
ham, split = build_hamiltonian(model)
psi, dmrg = dmrg_ground_state(Mpo.from_pauli(ham), chi_max=16, sweeps=20, tol=1e-12)
print(f"DMRG  E_GS = {dmrg.energy:.10f} eV  (max bond {dmrg.max_bond})")

circuit = exact_ladder(psi)
state = apply_circuit(circuit, Statevector.zero(model.n_qubits))
print(f"ladder circuit: {len(circuit)} blocks, about {circuit.estimated_cnot_count()} CNOTs")

cfg = QsegConfig(dt=0.05, n_l=100)
gf = qseg_green_function(state, dmrg.energy, [0], cfg, make_propagator(split, cfg.dt), ham)
ref = ed_green_functions(ed_ground_state(ham), ham, [0])

omega = default_grid()
z = omega + 1j * cfg.delta
write_gf("gf_qseg.dat", omega, {0: gf.retarded(0, z)}, cfg.delta)
write_gf("gf_ed.dat", omega, {0: ref.retarded(0, z)}, cfg.delta)

mx, l2 = compare_dos(gf.dos(0, omega).values, ref.dos(0, omega).values, omega)
print(f"DOS vs ED: max-abs {mx:.4f} states/eV, relative L2 {100 * l2:.2f}%")
rho = gf.dos(0, omega).values
is_peak = (rho[1:-1] > rho[:-2]) & (rho[1:-1] > rho[2:]) & (rho[1:-1] > 0.1)
print("main DOS peaks at", np.round(omega[1:-1][is_peak], 2), "eV")
