"""Command-line entry point ``aimqc``.

Exit status: 0 success, 2 configuration or usage error, 3 numerical
failure, 4 a stage did not converge (or a comparison missed its tolerance).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NONCONVERGED = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


def _load_model(path):
    from .model import read_model, small_aim

    if path is None:
        return small_aim()
    try:
        return read_model(path)
    except (OSError, KeyError, ValueError) as exc:
        raise CliError(f"cannot read model {path}: {exc}", EXIT_CONFIG) from None


def _dump(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True, default=float))


# -- subcommands ------------------------------------------------------------------------

def cmd_fit_bath(args) -> int:
    from .bath import HybridizationTarget, bethe_hybridization, fit_bath, read_hybridization
    from .model import AimModel, write_model

    if args.target:
        omega, vals = read_hybridization(args.target)
        target = HybridizationTarget(None, args.beta, len(omega), samples=vals)
    else:
        target = HybridizationTarget(bethe_hybridization, args.beta, args.nmats)
    bath, dist = fit_bath(target, args.nbath, args.restarts, args.seed, args.weighting)
    model = AimModel([[-args.U / 2]], bath.eps_bath, bath.V, args.U)
    write_model(model, args.out)
    _dump({"distance": dist, "energies": sorted(bath.eps_bath.diagonal().real.tolist()),
           "converged": bool(bath.converged), "model": str(args.out)})
    return EXIT_OK if bath.converged else EXIT_NONCONVERGED


def cmd_dmrg(args) -> int:
    import numpy as np

    from .dmrg import dmrg_ground_state
    from .model import build_hamiltonian
    from .mps import Mpo, write_mps

    ham, _ = build_hamiltonian(_load_model(args.model))
    psi, rep = dmrg_ground_state(Mpo.from_pauli(ham), args.chi, args.sweeps, args.tol, seed=args.seed)
    write_mps(args.out, psi)
    _dump({"energy": rep.energy, "variance": rep.variance, "max_bond": rep.max_bond,
           "converged": bool(rep.converged), "mps": str(args.out)})
    if not np.isfinite(rep.energy):
        return EXIT_NUMERIC
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


def cmd_compile(args) -> int:
    from .circuit import write_circuit
    from .model import build_hamiltonian
    from .mps import Mpo, read_mps
    from .pipeline import CompileSection, compile_state
    from .qsd import expand_blocks

    psi = read_mps(args.mps)
    ham, _ = build_hamiltonian(_load_model(args.model))
    mpo = Mpo.from_pauli(ham) if ham.n_qubits == psi.n_sites else None
    section = CompileSection(args.method, args.n_g, args.max_layers, args.f_target, args.layer_init)
    circuit, report = compile_state(psi, mpo, section)
    if args.elementary:
        circuit = expand_blocks(circuit)
    write_circuit(args.out, circuit)
    _dump({"fidelity": report.fidelity, "energy_qc": report.energy_qc, "cnot_count": report.cnot_count,
           "depth": report.depth, "layers": report.n_layers, "flag": report.flag, "circuit": str(args.out)})
    if args.method != "exact" and report.fidelity < args.f_target:
        return EXIT_NONCONVERGED
    return EXIT_OK


def _prepared_state(args, ham, n):
    from .circuit import read_circuit
    from .emulator import Statevector, apply_circuit, read_statevector
    from .mps import read_mps

    if args.circuit:
        return apply_circuit(read_circuit(args.circuit), Statevector.zero(n))
    if args.state:
        return read_statevector(args.state)
    if args.mps:
        return Statevector(read_mps(args.mps).to_statevector())
    from .ed import ed_ground_state

    return ed_ground_state(ham).state


def cmd_greens(args) -> int:
    import numpy as np

    from .emulator import expectation, make_propagator
    from .gf import QsegConfig, qseg_green_function, write_continued_fractions, write_gf
    from .model import build_hamiltonian
    from .mps import Mpo, read_mps
    from .mps import expectation as mps_expectation

    ham, split = build_hamiltonian(_load_model(args.model))
    state = _prepared_state(args, ham, ham.n_qubits)
    e_qc = expectation(ham, state)
    if args.energy_ref == "circuit":
        e_ref = e_qc
    elif args.e_gs is not None:
        e_ref = args.e_gs
    elif args.mps:
        e_ref = float(mps_expectation(read_mps(args.mps).normalized(), Mpo.from_pauli(ham)).real)
    else:
        from .ed import ed_ground_state

        e_ref = ed_ground_state(ham).energy
    cfg = QsegConfig(args.dt, args.nl, args.ntrotter, args.toeplitz_h, args.s_reg,
                     "circuit" if args.energy_ref == "circuit" else "mps_exact", args.delta)
    gf = qseg_green_function(state, e_ref, [args.orbital], cfg, make_propagator(split, args.dt, args.ntrotter), ham)
    grid = np.linspace(args.wmin, args.wmax, args.points)
    write_gf(args.out, grid, {args.orbital: gf.retarded(args.orbital, grid + 1j * args.delta)}, args.delta)
    if args.cf_out:
        write_continued_fractions(args.cf_out, gf)
    _dump({"e_ref": e_ref, "e_qc": e_qc, "depths": [cf.depth for cf in gf.branches[args.orbital]],
           "gf": str(args.out)})
    return EXIT_OK


def cmd_ed(args) -> int:
    import numpy as np

    from .ed import ed_green_functions, ed_ground_state
    from .gf import write_continued_fractions, write_gf
    from .model import build_hamiltonian

    ham, _ = build_hamiltonian(_load_model(args.model))
    res = ed_ground_state(ham, seed=args.seed)
    gf = ed_green_functions(res, ham, [args.orbital])
    grid = np.linspace(args.wmin, args.wmax, args.points)
    write_gf(args.out, grid, {args.orbital: gf.retarded(args.orbital, grid + 1j * args.delta)}, args.delta)
    if args.cf_out:
        write_continued_fractions(args.cf_out, gf)
    _dump({"energy": res.energy, "residual": res.residual, "gf": str(args.out)})
    return EXIT_OK


def cmd_dmft(args) -> int:
    from .bath import noninteracting_solver, run_dmft
    from .ed import ed_impurity_solver
    from .model import AimModel, write_model

    solver = noninteracting_solver if args.solver == "noninteracting" else ed_impurity_solver()
    history = run_dmft(args.U, args.nbath, solver, args.beta, args.nmats, args.max_iter, args.tol,
                       args.mixing, args.seed, weighting=args.weighting)
    final = history[-1]
    if args.out:
        write_model(AimModel([[-args.U / 2]], final.bath.eps_bath, final.bath.V, args.U), args.out)
    _dump({"iterations": final.iteration, "converged": bool(final.converged), "distance": final.distance,
           "gf_change": final.gf_change, "energies": sorted(final.bath.eps_bath.diagonal().real.tolist())})
    return EXIT_OK if final.converged else EXIT_NONCONVERGED


def cmd_pipeline(args) -> int:
    from .pipeline import load_config, run_pipeline

    cfg = load_config(args.config)
    if args.out:
        cfg.output.directory = args.out
    status, manifest = run_pipeline(cfg)
    print(manifest.read_text(), end="")
    return status


def cmd_compare(args) -> int:
    from .pipeline import compare_gf

    rep = compare_gf(args.file_a, args.file_b, args.max_abs, args.l2)
    _dump({"max_abs": rep.max_abs, "l2": rep.l2, "passed": rep.passed})
    return EXIT_OK if rep.passed else EXIT_NONCONVERGED


def cmd_evolve(args) -> int:
    from .emulator import apply_ladder, expectation, make_propagator, write_statevector
    from .model import build_hamiltonian, number_operator

    ham, split = build_hamiltonian(_load_model(args.model))
    state = _prepared_state(args, ham, ham.n_qubits)
    if args.orbital is not None:
        state = apply_ladder(args.orbital, True, state)
    prop = make_propagator(split, args.dt, args.nt, args.mode)
    norm0 = state.norm()
    state = prop.apply(state, args.steps)
    write_statevector(args.out, state)
    scale = state.norm() ** 2
    _dump({"time": args.dt * args.steps, "norm_change": state.norm() - norm0,
           "energy": expectation(ham, state) / scale if scale else 0.0,
           "particles": expectation(number_operator(ham.n_qubits), state) / scale if scale else 0.0,
           "state": str(args.out)})
    return EXIT_OK


# -- parser ------------------------------------------------------------------------------

def _add_grid(p) -> None:
    p.add_argument("--delta", type=float, default=0.1, help="broadening (eV)")
    p.add_argument("--wmin", type=float, default=-10.0)
    p.add_argument("--wmax", type=float, default=10.0)
    p.add_argument("--points", type=int, default=2001)


def _add_state_source(p) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--circuit", help="circuit file preparing the ground state")
    g.add_argument("--state", help="raw statevector dump")
    p.add_argument("--mps", help="MPS checkpoint (state if no circuit/state given; also E_GS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aimqc", description="Anderson impurity model: MPS + emulated QSEG")
    parser.add_argument("--threads", type=int, default=None, help="threads for dense linear algebra")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-bath", help="discretise a hybridization function")
    p.add_argument("--nbath", type=int, required=True)
    p.add_argument("--beta", type=float, default=100.0)
    p.add_argument("--nmats", type=int, default=100)
    p.add_argument("--restarts", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weighting", choices=["uniform", "inverse_frequency"], default="uniform")
    p.add_argument("--target", help="tabulated hybridization file (default: semicircular)")
    p.add_argument("--U", type=float, default=4.0, help="interaction of the emitted model")
    p.add_argument("--out", default="model.txt")
    p.set_defaults(func=cmd_fit_bath)

    p = sub.add_parser("dmrg", help="ground state MPS")
    p.add_argument("--model", help="model file (default: built-in 8-qubit model)")
    p.add_argument("--chi", type=int, default=32)
    p.add_argument("--sweeps", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="ground_state.mps")
    p.set_defaults(func=cmd_dmrg)

    p = sub.add_parser("compile", help="MPS to circuit")
    p.add_argument("--mps", required=True)
    p.add_argument("--model", help="model file for the circuit energy (default: built-in model)")
    p.add_argument("--method", choices=["exact", "variational", "hybrid"], default="exact")
    p.add_argument("--n-g", dest="n_g", type=int, default=2)
    p.add_argument("--max-layers", type=int, default=8)
    p.add_argument("--f-target", type=float, default=0.99)
    p.add_argument("--layer-init", choices=["ladder", "identity"], default="ladder")
    p.add_argument("--elementary", action="store_true", help="synthesise blocks into rotations and CNOTs")
    p.add_argument("--out", default="circuit.txt")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("greens", help="QSEG Green's function")
    p.add_argument("--model")
    _add_state_source(p)
    p.add_argument("--orbital", type=int, default=0)
    p.add_argument("--nl", type=int, default=100)
    p.add_argument("--dt", type=float, default=0.05)
    p.add_argument("--ntrotter", type=int, default=1)
    p.add_argument("--toeplitz-h", type=_on_off, default=False)
    p.add_argument("--energy-ref", choices=["mps", "circuit"], default="mps")
    p.add_argument("--e-gs", type=float, help="ground-state energy (overrides --mps / ED)")
    p.add_argument("--s-reg", type=float, default=1e-10)
    _add_grid(p)
    p.add_argument("--out", default="gf_qseg.dat")
    p.add_argument("--cf-out", help="continued-fraction dump")
    p.set_defaults(func=cmd_greens)

    p = sub.add_parser("ed", help="exact-diagonalization Green's function")
    p.add_argument("--model")
    p.add_argument("--orbital", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    _add_grid(p)
    p.add_argument("--out", default="gf_ed.dat")
    p.add_argument("--cf-out")
    p.set_defaults(func=cmd_ed)

    p = sub.add_parser("dmft", help="Bethe-lattice DMFT loop")
    p.add_argument("--U", type=float, default=4.0)
    p.add_argument("--nbath", type=int, default=7)
    p.add_argument("--beta", type=float, default=100.0)
    p.add_argument("--nmats", type=int, default=100)
    p.add_argument("--max-iter", type=int, default=30)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--mixing", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weighting", choices=["uniform", "inverse_frequency"], default="uniform")
    p.add_argument("--solver", choices=["ed", "noninteracting"], default="ed")
    p.add_argument("--out", help="write the converged model here")
    p.set_defaults(func=cmd_dmft)

    p = sub.add_parser("pipeline", help="run all stages from an INI config")
    p.add_argument("config")
    p.add_argument("--out", help="override output.directory")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("compare", help="DOS deviations between two GF files")
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.add_argument("--max-abs", type=float, default=0.02)
    p.add_argument("--l2", type=float, default=0.02)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("evolve", help="apply the Trotter propagator")
    p.add_argument("--model")
    _add_state_source(p)
    p.add_argument("--orbital", type=int, help="apply c^dag on this orbital first")
    p.add_argument("--dt", type=float, default=0.05)
    p.add_argument("--nt", type=int, default=1)
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--mode", choices=["trotter", "exact"], default="trotter")
    p.add_argument("--out", default="evolved.bin")
    p.set_defaults(func=cmd_evolve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    import numpy as np

    from .pipeline import ConfigError, StageError

    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"stage {exc.stage} failed: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
