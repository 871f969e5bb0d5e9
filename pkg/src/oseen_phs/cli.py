"""Command-line entry point ``oseen-phs``.

Exit codes: 0 success, 2 configuration error, 3 mesh error, 4 solver
error, 5 acceptance check failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .assembly import CompatibilityError
from .integrate import SimulationError, stationary_residual, steady_solve
from .io import (
    ConfigError,
    MeshError,
    load_config,
    run_scenario,
    scenario_initial_state,
    scenario_mesh,
    scenario_node,
    scenario_signal,
    write_vtk,
)
from .mesh import MeshFormatError, read_mesh, validate_mesh
from .oracle import OracleError, oracle_errors
from .sparse import SolverError

EXIT_OK, EXIT_CONFIG, EXIT_MESH, EXIT_SOLVER, EXIT_ACCEPTANCE = 0, 2, 3, 4, 5

log = logging.getLogger("oseen_phs")


def _config(args):
    cfg = load_config(args.config)
    for name in ("out_dir", "solver", "tol", "stride"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    cfg.validate()
    return cfg


def _write_json(path: Path, data: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n")


def cmd_run(args) -> int:
    cfg = _config(args)
    result = run_scenario(cfg, force=args.force)
    print(json.dumps(result.summary, indent=2))
    return EXIT_OK


def cmd_validate(args) -> int:
    path = Path(args.mesh)
    if not path.is_file():
        raise MeshError(f"mesh file not found: {path}")
    try:
        mesh = read_mesh(path)
    except MeshFormatError as exc:
        raise MeshError(f"{path}: {exc}") from None
    problems = validate_mesh(mesh)
    for p in problems:
        print(p)
    if problems:
        return EXIT_MESH
    counts = {k.value: v for k, v in mesh.tag_counts().items()}
    print(f"ok: {mesh.n_vertices} vertices, {len(mesh.triangles)} triangles, edges {counts}")
    return EXIT_OK


def cmd_steady(args) -> int:
    """Stationary solve for the inputs frozen at ``t_end``."""
    cfg = _config(args)
    mesh = scenario_mesh(cfg)
    node = scenario_node(cfg, mesh)
    signal = scenario_signal(cfg, mesh)
    u_v = signal.inflow(cfg.t_end, node.n_in)
    u_s = signal.outflow(cfg.t_end, node.n_out)
    state = steady_solve(node, u_v, u_s, tol=cfg.tol, backend=cfg.solver)
    s_in, s_out = node.supply_terms(node.output(state), u_v, u_s)
    d = node.dissipation_rate(state)
    report = {
        "H": node.hamiltonian(state),
        "dissipation": d,
        "supply_in": s_in,
        "supply_out": s_out,
        "power_balance": s_in + s_out + d,
        "stationary_residual": stationary_residual(node, state, u_s),
        "max_div": float(np.abs(node.forms.div @ node.velocity(state)).max()),
    }
    out = Path(cfg.out_dir)
    _write_json(out / "steady.json", report)
    if cfg.vtk:
        write_vtk(mesh, state, out / "steady.vtk", node.rho)
    print(json.dumps(report, indent=2))
    return EXIT_OK


def _oracle_setup(cfg):
    mesh = scenario_mesh(cfg)
    node = scenario_node(cfg, mesh)
    signal = scenario_signal(cfg, mesh)
    return node, signal, scenario_initial_state(cfg, node, signal)


def cmd_oracle_compare(args) -> int:
    cfg = _config(args)
    node, signal, state0 = _oracle_setup(cfg)
    (err,), _ = oracle_errors(node, signal, state0, cfg.t_end, [cfg.dt], cfg.tol, cfg.solver)
    ok = err <= cfg.oracle_tol
    report = {"dt": cfg.dt, "t_end": cfg.t_end, "relative_error": err,
              "threshold": cfg.oracle_tol, "passed": ok}
    _write_json(Path(cfg.out_dir) / "oracle.json", report)
    print(json.dumps(report, indent=2))
    return EXIT_OK if ok else EXIT_ACCEPTANCE


def cmd_convergence(args) -> int:
    cfg = _config(args)
    dts = list(cfg.dt_list) or [cfg.dt, cfg.dt / 2, cfg.dt / 4]
    node, signal, state0 = _oracle_setup(cfg)
    errors, _ = oracle_errors(node, signal, state0, cfg.t_end, dts, cfg.tol, cfg.solver)
    ratios = [a / b for a, b in zip(errors, errors[1:])]
    ok = all(3.5 <= r <= 4.5 for r in ratios)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "convergence.csv", "w") as fh:
        fh.write("dt,error,ratio\n")
        for k, (dt, e) in enumerate(zip(dts, errors)):
            r = ratios[k - 1] if k else float("nan")
            fh.write(f"{dt:.17g},{e:.17g},{r:.17g}\n")
    for k, (dt, e) in enumerate(zip(dts, errors)):
        tail = f"  ratio {ratios[k - 1]:.4f}" if k else ""
        print(f"dt = {dt:.3e}  error = {e:.6e}{tail}")
    print("second order confirmed" if ok else "observed ratios outside [3.5, 4.5]")
    return EXIT_OK if ok else EXIT_ACCEPTANCE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oseen-phs",
                                     description="Energy-certified Oseen channel simulations.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_cmd(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="scenario file (key = value lines)")
        p.add_argument("--out-dir", dest="out_dir", help="output directory (overrides out_dir)")
        p.add_argument("--solver", choices=("lu", "gmres"), help="saddle-point solver backend")
        p.add_argument("--tol", type=float, help="linear solver tolerance")
        p.add_argument("--stride", type=int, help="keep every n-th snapshot")
        p.add_argument("--force", action="store_true", help="skip the compatibility gate")
        p.set_defaults(func=func)

    scenario_cmd("run", cmd_run, "simulate a scenario and write the energy ledger")
    scenario_cmd("steady", cmd_steady, "solve the stationary problem for frozen inputs")
    scenario_cmd("oracle-compare", cmd_oracle_compare, "compare against the dense mild solution")
    scenario_cmd("convergence", cmd_convergence, "time-step halving study against the oracle")
    p = sub.add_parser("validate", help="check a mesh file")
    p.add_argument("mesh")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CompatibilityError as exc:
        print(f"incompatible data: {exc} (use --force to run anyway)", file=sys.stderr)
        return EXIT_CONFIG
    except (MeshError, MeshFormatError) as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return EXIT_MESH
    except (SolverError, SimulationError, OracleError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
