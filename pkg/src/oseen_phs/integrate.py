"""Energy-certified implicit midpoint integration of the boundary-controlled node.

One step solves the saddle system for the midpoint velocity ``w = (v + v+)/2``
and the midpoint pressure ``P``::

    (2 rho / dt) Mass (w - v) + (mu Stiff - rho Adv + c Mass) w + Div' P = load(t + dt/2)
    Div w = 0

on the free dofs, with the inflow trace of ``w`` set to the average of the
current trace and the inflow datum at ``t + dt``.  Testing the system with
``w`` itself gives the exact discrete energy balance recorded in the ledger.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import CompatibilityError
from .mesh import BoundaryTag, Violation
from .node import BoundarySignal, DiscreteOseenNode, FlowState
from .sparse import SolverError

log = logging.getLogger(__name__)

LEDGER_COLUMNS = ("t", "H", "dissipation", "supply_in", "supply_out", "residual", "div_inf")


class SimulationError(RuntimeError):
    """A step failed; ``trajectory`` holds everything computed before it."""

    def __init__(self, message: str, trajectory: "Trajectory"):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass(frozen=True)
class LedgerRow:
    t: float
    H: float
    dissipation: float
    supply_in: float
    supply_out: float
    residual: float
    div_inf: float
    dt: float = 0.0
    pressure_work: float = 0.0
    solver_residual: float = 0.0
    drift: float = 0.0

    def values(self) -> tuple:
        return tuple(getattr(self, c) for c in LEDGER_COLUMNS)


@dataclass
class EnergyLedger:
    """Per-step energy bookkeeping.  Row 0 is the initial state with zero rates;
    row ``k`` holds the energy after step ``k`` and the midpoint rates of that step."""

    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def append(self, row: LedgerRow):
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def as_array(self) -> np.ndarray:
        return np.array([r.values() for r in self.rows], dtype=float).reshape(-1, len(LEDGER_COLUMNS))

    def total(self, name: str) -> float:
        """Time integral of a rate column (``dissipation``, ``supply_in``, ``supply_out``)."""
        return float(np.sum(self.column("dt") * self.column(name)))

    def max_relative_residual(self) -> float:
        if not self.rows:
            return 0.0
        return float(np.max(np.abs(self.column("residual")) / np.maximum(1.0, self.column("H"))))

    def cumulative_error(self) -> float:
        """``H(end) - H(0) - sum dt (dissipation + supply) - sum residual``."""
        if not self.rows:
            return 0.0
        H = self.column("H")
        return float(H[-1] - H[0] - self.total("dissipation") - self.total("supply_in")
                     - self.total("supply_out") - np.sum(self.column("residual")))


@dataclass
class Trajectory:
    states: list
    ledger: EnergyLedger
    stats: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def final(self) -> FlowState:
        return self.states[-1]


# --------------------------------------------------------------------------
# initial data

def _div_scale(v) -> float:
    return max(1.0, float(np.abs(v).max(initial=0.0)))


def initial_pressure(node: DiscreteOseenNode, state: FlowState, signal: BoundarySignal,
                     tol: float = 1e-12, backend: str = "lu"):
    """Constraint-consistent pressure and momentum rate at the state's time.

    Solves ``rho Mass a + Div' P = dynamics v + load`` on free dofs with
    ``Div a = 0`` and ``a`` equal to the inflow rate on the inflow dofs.
    Returns ``(P, momentum_rate)``; the rate is ``rho a`` on all dofs.
    """
    dm = node.dofmap
    f = node.forms
    v = node.velocity(state)
    a_d = node.lift(signal.inflow_rate(state.t, node.n_in))
    rhs_v = node.dynamics @ v + f.neumann_load(signal.outflow(state.t, node.n_out))
    rhs_v = rhs_v - node.rho * (f.mass @ a_d)
    rhs = np.concatenate([rhs_v[dm.free], -(f.div @ a_d)])
    fac = node.factorization("mass", node.rho * node.mass_ff, backend)
    sol, _, _ = fac.solve(rhs, tol)
    a = a_d.copy()
    a[dm.free] = sol[: len(dm.free)]
    return sol[len(dm.free):], node.rho * a


def check_compatibility(node: DiscreteOseenNode, state: FlowState, signal: BoundarySignal,
                        tol: float = 1e-10, ledger_tol: float = 1e-8) -> list[Violation]:
    """Violations of the compatibility conditions between initial state and inputs.

    Checks the inflow trace, the wall trace, discrete incompressibility and
    the outflow stress balance of the consistent initial solve.  Regularity of
    the signal in time is not checked.
    """
    dm = node.dofmap
    out: list[Violation] = []
    try:
        v = node.velocity(state)
    except ValueError as exc:
        return [Violation("dimension", str(exc))]
    scale = _div_scale(v)
    u0 = signal.inflow(state.t, node.n_in)
    try:
        lifted = node.lift(u0)
    except (CompatibilityError, ValueError) as exc:
        out.append(Violation("inflow data", str(exc)))
        lifted = None
    if lifted is not None:
        err = np.abs(v[dm.dofs_in] - lifted[dm.dofs_in]).max(initial=0.0)
        if err > tol * max(1.0, float(np.abs(u0).max(initial=0.0))):
            out.append(Violation("inflow trace", f"|v(0) - u_v(0)| = {err:.3e} on the inflow boundary"))
    werr = np.abs(v[dm.dofs_wall]).max(initial=0.0)
    if werr > tol * scale:
        out.append(Violation("wall trace", f"|v(0)| = {werr:.3e} on the wall"))
    derr = np.abs(node.forms.div @ v).max(initial=0.0)
    if derr > tol * scale:
        out.append(Violation("incompressibility", f"|Div v(0)| = {derr:.3e}"))
    if out:
        return out
    try:
        P, rate = initial_pressure(node, state, signal)
    except SolverError as exc:
        return [Violation("initial solve", str(exc))]
    g = node.stress_functional(FlowState(state.p, P, state.t), rate)
    load = node.forms.neumann_load(signal.outflow(state.t, node.n_out))
    out_free = np.intersect1d(dm.vector_dofs(dm.out_nodes), dm.free)
    serr = np.abs(g[out_free] - load[out_free]).max(initial=0.0)
    if serr > ledger_tol * max(1.0, float(np.abs(load).max(initial=0.0))):
        out.append(Violation("outflow stress", f"consistent flux misses u_sigma(0) by {serr:.3e}"))
    return out


# --------------------------------------------------------------------------
# time stepping

def _midpoint_block(node: DiscreteOseenNode, dt: float):
    f = node.forms
    return ((2.0 * node.rho / dt + f.c) * f.mass + f.mu * f.stiff - f.rho * f.adv).tocsr()


def step_implicit_midpoint(node: DiscreteOseenNode, state: FlowState, signal: BoundarySignal,
                           dt: float, tol: float = 1e-12, backend: str = "lu"):
    """Advance one implicit midpoint step; returns ``(new_state, ledger_row)``."""
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    dm = node.dofmap
    f = node.forms
    F = dm.free
    v = node.velocity(state)
    t_half, t_new = state.t + 0.5 * dt, state.t + dt

    key = ("midpoint", float(dt))
    A = node._cache.get(("block", key))
    if A is None:
        A = node._cache[("block", key)] = _midpoint_block(node, dt)
    fac = node.factorization(key, A[F][:, F].tocsr(), backend)

    w_d = np.zeros(dm.n_v)
    w_d[dm.dofs_in] = 0.5 * (v[dm.dofs_in] + node.lift(signal.inflow(t_new, node.n_in))[dm.dofs_in])
    u_s = signal.outflow(t_half, node.n_out)
    load = f.neumann_load(u_s)
    rhs_v = (2.0 * node.rho / dt) * (f.mass @ v) + load - A @ w_d
    rhs = np.concatenate([rhs_v[F], -(f.div @ w_d)])
    sol, res, _ = fac.solve(rhs, tol)

    w = w_d
    w[F] = sol[: len(F)]
    P = sol[len(F):]
    v_new = 2.0 * w - v
    new_state = FlowState(node.rho * v_new, P, t_new)

    rate = 2.0 * node.rho * (w - v) / dt
    mid = FlowState(node.rho * w, P, t_half)
    y_sigma = node.output(mid, rate).y_sigma
    s_in = float(np.sum(y_sigma * dm.trace(w, BoundaryTag.IN)))
    tm = f.trace_mass_out
    w_out = dm.trace(w, BoundaryTag.OUT)
    s_out = float(w_out[:, 0] @ (tm @ u_s[:, 0]) + w_out[:, 1] @ (tm @ u_s[:, 1]))
    d = node.dissipation_rate(mid)
    H0, H1 = node.hamiltonian(state), node.hamiltonian(new_state)
    div_w = f.div @ w
    pw = abs(float(P @ div_w)) / max(np.linalg.norm(P) * np.linalg.norm(w), np.finfo(float).tiny)
    drift = float(np.abs(v_new[dm.dofs_in] - node.lift(signal.inflow(t_new, node.n_in))[dm.dofs_in])
                  .max(initial=0.0))
    if drift > 1e3 * tol * _div_scale(v_new):
        log.warning("inflow trace drift %.3e at t = %.6g", drift, t_new)
    row = LedgerRow(
        t=t_new, H=H1, dissipation=d, supply_in=s_in, supply_out=s_out,
        residual=(H1 - H0) - dt * (d + s_in + s_out),
        div_inf=float(np.abs(f.div @ v_new).max(initial=0.0)),
        dt=dt, pressure_work=pw, solver_residual=res, drift=drift,
    )
    return new_state, row


def simulate(node: DiscreteOseenNode, signal: BoundarySignal, state0: FlowState, t_end: float,
             dt: float, stride: int = 1, tol: float = 1e-12, backend: str = "lu",
             force: bool = False, ledger_tol: float = 1e-8) -> Trajectory:
    """Integrate from ``state0.t`` to ``t_end``.

    The step count is ``ceil((t_end - t0) / dt)``; the last step is shortened
    to land on ``t_end``.  Snapshots are kept every ``stride`` steps plus the
    final one.  Unless ``force`` is set, incompatible initial data raise
    :class:`CompatibilityError` (with the list in ``.violations``).
    """
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    if stride < 1:
        raise ValueError("stride must be a positive integer")
    t0 = float(state0.t)
    if t_end < t0:
        raise ValueError(f"t_end {t_end} precedes the initial time {t0}")
    if not force:
        bad = check_compatibility(node, state0, signal, ledger_tol=ledger_tol)
        if bad:
            err = CompatibilityError("incompatible initial data: " + "; ".join(map(str, bad)))
            err.violations = bad
            raise err
    try:
        P0, _ = initial_pressure(node, state0, signal, tol, backend)
    except SolverError as exc:
        raise SimulationError(f"initial pressure solve failed: {exc}",
                              Trajectory([state0], EnergyLedger())) from exc
    state = FlowState(np.asarray(state0.p, dtype=float), P0, t0)
    ledger = EnergyLedger([LedgerRow(t0, node.hamiltonian(state), 0.0, 0.0, 0.0, 0.0,
                                     float(np.abs(node.forms.div @ node.velocity(state)).max(initial=0.0)))])
    traj = Trajectory([state], ledger)
    n_steps = max(0, math.ceil((t_end - t0) / dt - 1e-9))
    stats = traj.stats
    stats.update(steps=0, max_solver_residual=0.0, max_drift=0.0, ledger_violations=0)
    for k in range(1, n_steps + 1):
        t_next = t_end if k == n_steps else t0 + k * dt
        h = dt
        if k == n_steps:
            last = t_end - (t0 + (k - 1) * dt)
            if abs(last - dt) > 1e-12 * dt:
                h = last
        try:
            state, row = step_implicit_midpoint(node, state, signal, h, tol, backend)
        except (SolverError, np.linalg.LinAlgError) as exc:
            if traj.states[-1] is not state:
                traj.states.append(state)
            raise SimulationError(f"step {k} at t = {state.t:.6g} failed: {exc}", traj) from exc
        # pin the clock to the grid so long runs do not accumulate rounding
        state = FlowState(state.p, state.P, t_next)
        row = LedgerRow(**{**row.__dict__, "t": t_next})
        ledger.append(row)
        stats["steps"] = k
        stats["max_solver_residual"] = max(stats["max_solver_residual"], row.solver_residual)
        stats["max_drift"] = max(stats["max_drift"], row.drift)
        if abs(row.residual) > ledger_tol * max(1.0, row.H):
            stats["ledger_violations"] += 1
            log.warning("energy balance residual %.3e at t = %.6g", row.residual, t_next)
        if k % stride == 0 or k == n_steps:
            traj.states.append(state)
    return traj


# --------------------------------------------------------------------------
# stationary problems

def _solve_stationary(node, key, A, v_d, load, tol, backend):
    dm = node.dofmap
    F = dm.free
    fac = node.factorization(key, A[F][:, F].tocsr(), backend)
    rhs = np.concatenate([(load - A @ v_d)[F], -(node.forms.div @ v_d)])
    sol, _, _ = fac.solve(rhs, tol)
    v = v_d.copy()
    v[F] = sol[: len(F)]
    return v, sol[len(F):]


def steady_solve(node: DiscreteOseenNode, u_v=None, u_sigma=None, tol: float = 1e-12,
                 backend: str = "lu", t: float = 0.0) -> FlowState:
    """Stationary state for frozen inputs ``u_v`` (n_in, 2) and ``u_sigma`` (n_out, 2)."""
    f = node.forms
    A = node._cache.get(("block", "steady"))
    if A is None:
        A = node._cache[("block", "steady")] = (-node.dynamics).tocsr()
    v_d = node.lift(np.zeros((node.n_in, 2)) if u_v is None else u_v)
    v, P = _solve_stationary(node, "steady", A, v_d, f.neumann_load(u_sigma), tol, backend)
    return node.state_from_velocity(v, P, t)


def resolvent_solve(node: DiscreteOseenNode, z, lam: float = 1.0, tol: float = 1e-12,
                    backend: str = "lu") -> FlowState:
    """Solve ``(lam - dynamics) v + Div' P = Mass z``, ``Div v = 0`` with homogeneous
    boundary data; ``z`` is a velocity-dof vector."""
    if not lam > 0:
        raise ValueError("resolvent parameter must be positive")
    f = node.forms
    z = np.asarray(z, dtype=float)
    if z.shape != (node.dofmap.n_v,):
        raise ValueError(f"load has shape {z.shape}, expected ({node.dofmap.n_v},)")
    key = ("resolvent", float(lam))
    A = node._cache.get(("block", key))
    if A is None:
        A = node._cache[("block", key)] = (lam * f.mass - node.dynamics).tocsr()
    v, P = _solve_stationary(node, key, A, np.zeros(node.dofmap.n_v), f.mass @ z, tol, backend)
    return node.state_from_velocity(v, P)


def stationary_residual(node: DiscreteOseenNode, state: FlowState, u_sigma=None) -> float:
    """Max-norm of the steady momentum residual on free dofs and of ``Div v``."""
    r, c = node.apply_dynamics(state, u_sigma)
    return float(max(np.abs(r).max(initial=0.0), np.abs(c).max(initial=0.0)))


__all__ = [
    "LEDGER_COLUMNS", "LedgerRow", "EnergyLedger", "Trajectory", "SimulationError",
    "check_compatibility", "initial_pressure", "step_implicit_midpoint", "simulate",
    "steady_solve", "resolvent_solve", "stationary_residual",
]

