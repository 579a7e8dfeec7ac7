"""End-to-end driver: bath fit, DMRG, circuit compilation, emulated QSEG, DOS.

Configuration is an INI file. Every section and key is optional except
where noted; unknown sections or keys are rejected. See ``README.md`` for
the full grammar and defaults.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)

MODEL_SOURCES = ("small_aim", "resonant_level", "hubbard_atom", "bethe", "file")
COMPILE_METHODS = ("exact", "variational", "hybrid")


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


class StageError(RuntimeError):
    """A pipeline stage failed; ``code`` is the process exit status."""

    def __init__(self, stage: str, message: str, code: int = 3):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.code = code


@dataclass
class ModelSection:
    source: str = "small_aim"
    path: str = ""
    U: float = 4.0
    eps: float = 0.0
    eps_bath: float = 0.0
    V: float = 0.5


@dataclass
class BathSection:
    n_bath: int = 3
    beta: float = 100.0
    n_matsubara: int = 100
    restarts: int = 32
    seed: int = 0
    weighting: str = "uniform"


@dataclass
class DmrgSection:
    chi_max: int = 32
    sweeps: int = 20
    tol: float = 1e-10
    seed: int = 0


@dataclass
class CompileSection:
    method: str = "exact"
    n_g: int = 2
    max_layers: int = 8
    f_target: float = 0.99
    layer_init: str = "ladder"


@dataclass
class QsegSection:
    dt: float = 0.05
    n_l: int = 100
    n_T: int = 1
    toeplitz: bool = False
    delta: float = 0.1
    omega_min: float = -10.0
    omega_max: float = 10.0
    points: int = 2001
    energy_reference: str = "mps_exact"
    s_regularization: float = 1e-10
    orbitals: tuple = (0,)


@dataclass
class OutputSection:
    directory: str = "pipeline_out"
    ed_reference: bool = True


@dataclass
class PipelineConfig:
    model: ModelSection = field(default_factory=ModelSection)
    bath: BathSection = field(default_factory=BathSection)
    dmrg: DmrgSection = field(default_factory=DmrgSection)
    compile: CompileSection = field(default_factory=CompileSection)
    qseg: QsegSection = field(default_factory=QsegSection)
    output: OutputSection = field(default_factory=OutputSection)

    def validate(self) -> None:
        checks = [
            (self.model.source in MODEL_SOURCES, f"model.source must be one of {MODEL_SOURCES}"),
            (self.model.source != "file" or bool(self.model.path), "model.path required for source = file"),
            (self.bath.n_bath >= 0 and self.bath.n_matsubara >= 1, "bath sizes must be non-negative"),
            (self.bath.beta > 0 and self.bath.restarts >= 0, "bath.beta > 0 and restarts >= 0 required"),
            (self.dmrg.chi_max >= 1 and self.dmrg.sweeps >= 1 and self.dmrg.tol > 0, "invalid dmrg section"),
            (self.compile.method in COMPILE_METHODS, f"compile.method must be one of {COMPILE_METHODS}"),
            (self.compile.n_g >= 2 and self.compile.max_layers >= 1, "compile.n_g >= 2 and max_layers >= 1"),
            (0 < self.compile.f_target <= 1, "compile.f_target must lie in (0, 1]"),
            (self.compile.layer_init in ("ladder", "identity"), "compile.layer_init must be ladder or identity"),
            (self.qseg.dt > 0 and self.qseg.n_l >= 1 and self.qseg.n_T >= 1, "invalid qseg time step settings"),
            (self.qseg.delta > 0, "qseg.delta must be positive"),
            (self.qseg.omega_max > self.qseg.omega_min and self.qseg.points >= 2, "invalid qseg grid"),
            (self.qseg.energy_reference in ("mps_exact", "circuit"), "qseg.energy_reference: mps_exact or circuit"),
            (0 < self.qseg.s_regularization < 1, "qseg.s_regularization must lie in (0, 1)"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "model": ModelSection, "bath": BathSection, "dmrg": DmrgSection,
    "compile": CompileSection, "qseg": QsegSection, "output": OutputSection,
}


def _convert(section: str, key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(x) for x in raw.replace(",", " ").split())
        return raw.strip()
    except ValueError:
        raise ConfigError(f"cannot parse {section}.{key} = {raw!r}") from None


def parse_config(text: str) -> PipelineConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case sensitive (U vs u)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    cfg = PipelineConfig()
    for name in parser.sections():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        section = getattr(cfg, name)
        for key, raw in parser.items(name):
            if not hasattr(section, key):
                raise ConfigError(f"unknown key {name}.{key}")
            setattr(section, key, _convert(name, key, raw, getattr(section, key)))
    cfg.validate()
    return cfg


def load_config(path) -> PipelineConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


# -- stages -----------------------------------------------------------------------------

def build_model(cfg: PipelineConfig, out: Optional[Path] = None):
    from .bath import HybridizationTarget, bethe_hybridization, fit_bath
    from .model import AimModel, hubbard_atom, read_model, resonant_level, small_aim

    m = cfg.model
    if m.source == "small_aim":
        return small_aim(m.U)
    if m.source == "resonant_level":
        return resonant_level(m.eps, m.eps_bath, m.V)
    if m.source == "hubbard_atom":
        return hubbard_atom(m.U)
    if m.source == "file":
        return read_model(m.path)
    b = cfg.bath
    target = HybridizationTarget(bethe_hybridization, b.beta, b.n_matsubara)
    bath, dist = fit_bath(target, b.n_bath, b.restarts, b.seed, b.weighting)
    if out is not None:
        (out / "bath_fit.json").write_text(json.dumps(
            {"distance": dist, "energies": np.diag(bath.eps_bath).real.tolist(),
             "couplings": bath.V[0].real.tolist(), "converged": bool(bath.converged)}, indent=2, sort_keys=True) + "\n")
    return AimModel([[-m.U / 2]], bath.eps_bath, bath.V, m.U)


def compile_state(psi, mpo, cfg: CompileSection):
    from .compiler import exact_ladder, hybrid_compile, ladder_report, variational_compile

    if cfg.method == "exact":
        circuit = exact_ladder(psi)
        return circuit, ladder_report(psi, circuit, mpo)
    if cfg.method == "variational":
        circuit, reports = variational_compile(psi, cfg.n_g, cfg.max_layers, f_target=cfg.f_target,
                                               hamiltonian=mpo, layer_init=cfg.layer_init)
        return circuit, reports[-1]
    return hybrid_compile(psi, cfg.f_target, mpo)


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, files: list[Path]) -> Path:
    manifest = out / "manifest.txt"
    with open(manifest, "w") as fh:
        for f in sorted(files, key=lambda p: p.name):
            fh.write(f"{sha256_file(f)}  {f.name}\n")
    return manifest


def _json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=float) + "\n")


def run_pipeline(cfg: PipelineConfig) -> tuple[int, Path]:
    """Run all stages; returns ``(exit status, manifest path)``.

    Raises :class:`StageError` naming the failing stage; files written by
    earlier stages are kept.
    """
    from .circuit import write_circuit
    from .dmrg import dmrg_ground_state
    from .ed import ed_green_functions, ed_ground_state
    from .emulator import Statevector, apply_circuit, expectation, make_propagator
    from .gf import QsegConfig, compare_dos, qseg_green_function, write_continued_fractions, write_gf
    from .model import build_hamiltonian, write_model
    from .mps import Mpo, write_mps

    out = Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    recorded = cfg.to_dict()
    recorded["output"].pop("directory")  # keeps manifests independent of where a run lands
    (out / "config.json").write_text(json.dumps(recorded, indent=2, sort_keys=True) + "\n")

    try:
        model = build_model(cfg, out)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise StageError("model", str(exc)) from exc
    write_model(model, out / "model.txt")
    ham, split = build_hamiltonian(model)
    n = ham.n_qubits
    for orb in cfg.qseg.orbitals:
        if not 0 <= orb < n:
            raise StageError("config", f"orbital {orb} outside {n} spin orbitals", 2)

    mpo = Mpo.from_pauli(ham)
    d = cfg.dmrg
    psi, rep = dmrg_ground_state(mpo, d.chi_max, d.sweeps, d.tol, seed=d.seed)
    write_mps(out / "ground_state.mps", psi)
    _json(out / "dmrg.json", {"energy": rep.energy, "variance": rep.variance, "max_bond": rep.max_bond,
                              "converged": bool(rep.converged), "energies": list(rep.energies)})
    if not np.isfinite(rep.energy):
        raise StageError("dmrg", "non-finite energy")
    if not rep.converged:
        raise StageError("dmrg", f"not converged after {d.sweeps} sweeps", 4)

    circuit, creport = compile_state(psi, mpo, cfg.compile)
    write_circuit(out / "circuit.txt", circuit)
    _json(out / "compile.json", {k: v for k, v in asdict(creport).items() if k != "fidelity_history"})
    if cfg.compile.method != "exact" and creport.fidelity < cfg.compile.f_target:
        raise StageError("compile", f"fidelity {creport.fidelity:.6f} below target {cfg.compile.f_target}", 4)

    state = apply_circuit(circuit, Statevector.zero(n))
    e_qc = expectation(ham, state)
    e_ref = rep.energy if cfg.qseg.energy_reference == "mps_exact" else e_qc
    q = cfg.qseg
    qcfg = QsegConfig(q.dt, q.n_l, q.n_T, q.toeplitz, q.s_regularization, q.energy_reference, q.delta)
    prop = make_propagator(split, q.dt, q.n_T)
    grid = np.linspace(q.omega_min, q.omega_max, q.points)
    try:
        gf = qseg_green_function(state, e_ref, list(q.orbitals), qcfg, prop, ham)
    except ValueError as exc:
        raise StageError("qseg", str(exc)) from exc
    z = grid + 1j * q.delta
    write_gf(out / "gf_qseg.dat", grid, {o: gf.retarded(o, z) for o in q.orbitals}, q.delta)
    write_continued_fractions(out / "cf_qseg.txt", gf)
    summary = {"e_gs": rep.energy, "e_qc": e_qc, "e_ref": e_ref, "fidelity": creport.fidelity}

    if cfg.output.ed_reference:
        if n > 16:
            raise StageError("ed", f"{n} qubits too large for the dense reference", 2)
        res = ed_ground_state(ham)
        ged = ed_green_functions(res, ham, list(q.orbitals))
        write_gf(out / "gf_ed.dat", grid, {o: ged.retarded(o, z) for o in q.orbitals}, q.delta)
        write_continued_fractions(out / "cf_ed.txt", ged)
        summary["e_ed"] = res.energy
        for o in q.orbitals:
            mx, l2 = compare_dos(gf.dos(o, grid, q.delta).values, ged.dos(o, grid, q.delta).values, grid)
            summary[f"dos_max_abs[{o}]"] = mx
            summary[f"dos_l2[{o}]"] = l2
    _json(out / "summary.json", summary)

    files = [p for p in out.iterdir() if p.is_file() and p.name != "manifest.txt"]
    manifest = write_manifest(out, files)
    return 0, manifest


# -- comparisons --------------------------------------------------------------------

@dataclass
class CompareReport:
    max_abs: list
    l2: list
    passed: bool


def compare_gf(file_a, file_b, max_abs_tol: float = 0.02, l2_tol: float = 0.02) -> CompareReport:
    """DOS deviations column by column between two GF files on the same grid."""
    from .gf import compare_dos, read_gf

    wa, ca = read_gf(file_a)
    wb, cb = read_gf(file_b)
    if wa.shape != wb.shape or not np.allclose(wa, wb, rtol=0, atol=1e-12):
        raise ValueError("frequency grids differ")
    if ca.shape != cb.shape:
        raise ValueError("files hold different numbers of orbitals")
    mx, l2 = [], []
    for col in range(2, ca.shape[1], 3):
        a, b = compare_dos(ca[:, col], cb[:, col], wa)
        mx.append(a)
        l2.append(b)
    return CompareReport(mx, l2, all(a <= max_abs_tol for a in mx) and all(b <= l2_tol for b in l2))
