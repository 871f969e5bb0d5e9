"""Scenario configuration, ledger/field output and scenario driver."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import generate_tangential_field
from .integrate import LEDGER_COLUMNS, EnergyLedger, Trajectory, simulate, steady_solve
from .mesh import Mesh, MeshFormatError, build_channel_mesh, read_mesh, validate_mesh
from .node import BoundarySignal, DiscreteOseenNode, FlowState
from .signals import constant_outflow, parabolic_inflow, sinusoidal_outflow

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Malformed or invalid scenario configuration; ``key`` names the culprit."""

    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(message if key is None else f"{key}: {message}")


class MeshError(ValueError):
    """Mesh could not be read or failed validation."""


# --------------------------------------------------------------------------
# configuration

@dataclass
class ScenarioConfig:
    mesh: str = "channel"  # "channel" or a mesh file path
    length: float = 2.0
    height: float = 1.0
    nx: int = 16
    ny: int = 8
    mu: float = 1.0
    rho: float = 1.0
    c: float = 0.0
    convection: str = "none"  # none | vortex
    convection_amplitude: float = 1.0
    inflow: str = "none"  # none | parabolic
    inflow_peak: float = 1.0
    inflow_ramp: float = 0.0
    outflow: str = "zero"  # zero | constant | sinusoidal
    outflow_stress: tuple = (0.0, 0.0)
    outflow_frequency: float = 1.0
    initial: str = "zero"  # zero | steady | random
    initial_energy: float = 1.0
    seed: int = 0
    dt: float = 1e-2
    t_end: float = 1.0
    stride: int = 1
    solver: str = "lu"
    tol: float = 1e-12
    ledger_tol: float = 1e-8
    out_dir: str = "out"
    vtk: bool = False
    dt_list: tuple = ()
    oracle_tol: float = 1e-5

    def validate(self) -> None:
        checks = [
            ("mu", self.mu > 0, "must be positive"),
            ("rho", self.rho > 0, "must be positive"),
            ("c", self.c >= 0, "must be nonnegative"),
            ("dt", self.dt > 0, "must be positive"),
            ("t_end", self.t_end >= 0, "must be nonnegative"),
            ("stride", self.stride >= 1, "must be at least 1"),
            ("tol", self.tol > 0, "must be positive"),
            ("nx", self.nx >= 1, "must be at least 1"),
            ("ny", self.ny >= 1, "must be at least 1"),
            ("convection", self.convection in ("none", "vortex"), "expected none or vortex"),
            ("inflow", self.inflow in ("none", "parabolic"), "expected none or parabolic"),
            ("outflow", self.outflow in ("zero", "constant", "sinusoidal"),
             "expected zero, constant or sinusoidal"),
            ("initial", self.initial in ("zero", "steady", "random"), "expected zero, steady or random"),
            ("solver", self.solver in ("lu", "gmres"), "expected lu or gmres"),
            ("outflow_stress", len(self.outflow_stress) == 2, "expected two components"),
            ("dt_list", all(d > 0 for d in self.dt_list), "entries must be positive"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(msg, key)


def _parse_value(key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(raw)
            return low in ("true", "yes", "1")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(t) for t in raw.replace(",", " ").split())
        return raw
    except ValueError:
        raise ConfigError(f"cannot parse {raw!r} as {type(default).__name__}", key) from None


def parse_config(text: str, base_dir: Path | None = None) -> ScenarioConfig:
    """Parse flat ``key = value`` lines (``#`` starts a comment)."""
    defaults = ScenarioConfig()
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"unknown key (line {lineno})", key)
        if key in values:
            raise ConfigError(f"duplicate key (line {lineno})", key)
        values[key] = _parse_value(key, raw, getattr(defaults, key))
    cfg = ScenarioConfig(**values)
    if base_dir is not None and cfg.mesh != "channel" and not Path(cfg.mesh).is_absolute():
        cfg.mesh = str(Path(base_dir) / cfg.mesh)
    cfg.validate()
    return cfg


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    return parse_config(text, path.parent)


# --------------------------------------------------------------------------
# scenario construction

def scenario_mesh(cfg: ScenarioConfig) -> Mesh:
    if cfg.mesh == "channel":
        mesh = build_channel_mesh(cfg.length, cfg.height, cfg.nx, cfg.ny)
    else:
        path = Path(cfg.mesh)
        if not path.is_file():
            raise MeshError(f"mesh file not found: {path}")
        try:
            mesh = read_mesh(path)
        except MeshFormatError as exc:
            raise MeshError(f"{path}: {exc}") from None
    bad = validate_mesh(mesh)
    if bad:
        raise MeshError("invalid mesh: " + "; ".join(map(str, bad)))
    return mesh


def vortex_field(mesh: Mesh, amplitude: float = 1.0):
    """Recirculating field from ``psi = A sin^2(pi x' / L) sin^2(pi y' / H)`` on
    the bounding box of ``mesh``; it vanishes on a rectangular boundary."""
    (x0, y0), (x1, y1) = mesh.nodes.min(axis=0).tolist(), mesh.nodes.max(axis=0).tolist()
    psi = (f"{amplitude!r} * sin(pi * (x - {x0!r}) / {x1 - x0!r})**2"
           f" * sin(pi * (y - {y0!r}) / {y1 - y0!r})**2")
    return generate_tangential_field(mesh, psi)


def scenario_node(cfg: ScenarioConfig, mesh: Mesh) -> DiscreteOseenNode:
    b = vortex_field(mesh, cfg.convection_amplitude) if cfg.convection == "vortex" else None
    return DiscreteOseenNode.build(mesh, cfg.mu, cfg.rho, cfg.c, b)


def scenario_signal(cfg: ScenarioConfig, mesh: Mesh) -> BoundarySignal:
    if cfg.outflow == "constant":
        u_sigma = constant_outflow(mesh, cfg.outflow_stress)
    elif cfg.outflow == "sinusoidal":
        u_sigma = sinusoidal_outflow(mesh, cfg.outflow_stress, cfg.outflow_frequency)
    else:
        u_sigma = None
    if cfg.inflow == "parabolic":
        return parabolic_inflow(mesh, cfg.inflow_peak, cfg.inflow_ramp, u_sigma)
    return BoundarySignal(u_sigma=u_sigma)


def scenario_initial_state(cfg: ScenarioConfig, node: DiscreteOseenNode,
                           signal: BoundarySignal) -> FlowState:
    """Zero, steady (for the inputs at t = 0) or steady plus a random
    divergence-free perturbation of Hamiltonian ``initial_energy``."""
    if cfg.initial == "zero":
        return node.state_from_velocity(np.zeros(node.dofmap.n_v))
    base = steady_solve(node, signal.inflow(0.0, node.n_in), signal.outflow(0.0, node.n_out),
                        tol=cfg.tol, backend=cfg.solver)
    if cfg.initial == "steady":
        return base
    rng = np.random.default_rng(cfg.seed)
    pert = node.random_admissible_state(rng, cfg.initial_energy)
    return FlowState(base.p + pert.p, base.P, 0.0)


# --------------------------------------------------------------------------
# output

def write_ledger_csv(ledger: EnergyLedger, path) -> None:
    """Ledger columns ``t,H,dissipation,supply_in,supply_out,residual,div_inf``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LEDGER_COLUMNS)
        for row in ledger.rows:
            w.writerow([f"{x:.17g}" for x in row.values()])


def read_ledger_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(x) for x in r] for r in rows[1:]]).reshape(-1, len(rows[0]))
    return rows[0], data


_VTK_QUADRATIC_TRIANGLE = 22


def write_vtk(mesh: Mesh, state: FlowState, path, rho: float = 1.0) -> None:
    """Legacy ASCII VTK with quadratic triangles, point fields ``velocity``
    and ``pressure`` (linear pressure evaluated at every quadratic node)."""
    pts = mesh.p2_nodes
    n = len(pts)
    v = np.asarray(state.p, dtype=float) / rho
    P = np.asarray(state.P, dtype=float)
    edges = mesh.edges
    p_nodes = np.concatenate([P, 0.5 * (P[edges[:, 0]] + P[edges[:, 1]])])
    cells = mesh.p2_cells
    lines = ["# vtk DataFile Version 3.0", f"oseen state t={state.t:.17g}", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in pts]
    lines.append(f"CELLS {len(cells)} {7 * len(cells)}")
    lines += ["6 " + " ".join(map(str, c)) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(_VTK_QUADRATIC_TRIANGLE)] * len(cells)
    lines += [f"POINT_DATA {n}", "VECTORS velocity double"]
    lines += [f"{a:.17g} {b:.17g} 0" for a, b in zip(v[:n], v[n:])]
    lines += ["SCALARS pressure double 1", "LOOKUP_TABLE default"]
    lines += [f"{x:.17g}" for x in p_nodes]
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk(path) -> dict:
    """Minimal reader for files written by :func:`write_vtk`."""
    tokens = Path(path).read_text().split("\n")
    out = {"point_data": {}}
    i = 0
    while i < len(tokens):
        parts = tokens[i].split()
        if parts and parts[0] == "POINTS":
            n = int(parts[1])
            out["points"] = np.array([list(map(float, tokens[i + 1 + k].split())) for k in range(n)])
            i += n
        elif parts and parts[0] == "CELLS":
            m = int(parts[1])
            out["cells"] = np.array([list(map(int, tokens[i + 1 + k].split()))[1:] for k in range(m)])
            i += m
        elif parts and parts[0] == "CELL_TYPES":
            m = int(parts[1])
            out["cell_types"] = np.array([int(tokens[i + 1 + k]) for k in range(m)])
            i += m
        elif parts and parts[0] == "VECTORS":
            n = len(out["points"])
            out["point_data"][parts[1]] = np.array(
                [list(map(float, tokens[i + 1 + k].split())) for k in range(n)])
            i += n
        elif parts and parts[0] == "SCALARS":
            n = len(out["points"])
            out["point_data"][parts[1]] = np.array([float(tokens[i + 2 + k]) for k in range(n)])
            i += n + 1
        i += 1
    return out


# --------------------------------------------------------------------------
# driver

def summarize(node: DiscreteOseenNode, traj: Trajectory) -> dict:
    led = traj.ledger
    v0 = node.velocity(traj.states[0])
    dev = max(float(np.abs(node.velocity(s) - v0).max(initial=0.0)) for s in traj.states)
    res = led.column("residual")
    return {
        "steps": len(led) - 1,
        "t_end": led.rows[-1].t,
        "initial_H": led.rows[0].H,
        "final_H": led.rows[-1].H,
        "total_dissipation": led.total("dissipation"),
        "total_supply_in": led.total("supply_in"),
        "total_supply_out": led.total("supply_out"),
        "total_supply": led.total("supply_in") + led.total("supply_out"),
        "sum_residual": float(np.sum(res)),
        "max_residual": float(np.abs(res).max(initial=0.0)),
        "max_relative_residual": led.max_relative_residual(),
        "max_div": float(led.column("div_inf").max(initial=0.0)),
        "max_deviation_from_initial": dev,
        "ledger_violations": traj.stats.get("ledger_violations", 0),
    }


@dataclass
class RunResult:
    summary: dict
    trajectory: Trajectory
    paths: dict = field(default_factory=dict)


def run_scenario(cfg: ScenarioConfig, force: bool = False) -> RunResult:
    """Simulate a configured scenario and write ``ledger.csv``, ``summary.json``
    and, if requested, one VTK file per stored snapshot into ``cfg.out_dir``."""
    mesh = scenario_mesh(cfg)
    node = scenario_node(cfg, mesh)
    signal = scenario_signal(cfg, mesh)
    state0 = scenario_initial_state(cfg, node, signal)
    traj = simulate(node, signal, state0, cfg.t_end, cfg.dt, cfg.stride, cfg.tol, cfg.solver,
                    force=force, ledger_tol=cfg.ledger_tol)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"ledger": out / "ledger.csv", "summary": out / "summary.json"}
    write_ledger_csv(traj.ledger, paths["ledger"])
    summary = summarize(node, traj)
    paths["summary"].write_text(json.dumps(summary, indent=2) + "\n")
    if cfg.vtk:
        for k, s in enumerate(traj.states):
            p = out / f"state_{k:05d}.vtk"
            write_vtk(mesh, s, p, node.rho)
            paths.setdefault("vtk", []).append(p)
    return RunResult(summary, traj, paths)
