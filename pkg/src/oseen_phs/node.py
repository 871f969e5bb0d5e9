"""The discrete port-Hamiltonian node of the boundary-controlled Oseen system.

State is the momentum ``p = rho v``; the Hamiltonian is the kinetic energy
``H(p) = p' Mass p / (2 rho)``.  Inputs are the inflow velocity trace
``u_v`` and the outflow normal stress ``u_sigma``; the collocated outputs
are the inflow normal stress ``y_sigma`` and the outflow velocity trace
``y_v``, so that along solutions

    dH/dt = -mu |grad v|^2 - c |v|^2 + <y_sigma, u_v> + <y_v, u_sigma>.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .assembly import (
    AssembledForms,
    CompatibilityError,
    assemble_forms,
    consistent_boundary_flux,
    dirichlet_lifting,
    stress_functional,
)
from .mesh import BoundaryTag, Mesh
from .sparse import SaddleFactorization


@dataclass(frozen=True)
class FlowState:
    """Momentum coefficients ``p``, pressure coefficients ``P`` and time ``t``.

    After a time step ``P`` holds the pressure multiplier of the step's
    midpoint stage.
    """

    p: np.ndarray
    P: np.ndarray
    t: float = 0.0


@dataclass(frozen=True)
class PortOutput:
    y_sigma: np.ndarray  # (n_in, 2) stress functional values on the inflow
    y_v: np.ndarray  # (n_out, 2) velocity trace on the outflow


@dataclass(frozen=True)
class BoundarySignal:
    """Time-dependent boundary inputs.

    ``u_v(t)`` returns inflow nodal velocities (n_in, 2), ``u_sigma(t)``
    outflow nodal stresses (n_out, 2).  ``None`` means identically zero.
    ``du_v`` is the optional exact time derivative of ``u_v``.
    """

    u_v: Callable[[float], np.ndarray] | None = None
    u_sigma: Callable[[float], np.ndarray] | None = None
    du_v: Callable[[float], np.ndarray] | None = None

    def inflow(self, t: float, n_in: int) -> np.ndarray:
        return np.zeros((n_in, 2)) if self.u_v is None else np.asarray(self.u_v(t), dtype=float)

    def outflow(self, t: float, n_out: int) -> np.ndarray:
        return np.zeros((n_out, 2)) if self.u_sigma is None else np.asarray(self.u_sigma(t), dtype=float)

    def inflow_rate(self, t: float, n_in: int, h: float = 1e-6) -> np.ndarray:
        if self.u_v is None:
            return np.zeros((n_in, 2))
        if self.du_v is not None:
            return np.asarray(self.du_v(t), dtype=float)
        # one-sided near t = 0 so signals need not be defined for t < 0
        if t < h:
            return (np.asarray(self.u_v(t + h)) - np.asarray(self.u_v(t))) / h
        return (np.asarray(self.u_v(t + h)) - np.asarray(self.u_v(t - h))) / (2 * h)


@dataclass(frozen=True, eq=False)
class DiscreteOseenNode:
    forms: AssembledForms
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    @classmethod
    def build(cls, mesh: Mesh, mu: float, rho: float = 1.0, c: float = 0.0,
              convection=None) -> "DiscreteOseenNode":
        return cls(assemble_forms(mesh, mu, rho, c, convection))

    # -- shorthands -------------------------------------------------------
    @property
    def mesh(self) -> Mesh:
        return self.forms.mesh

    @property
    def dofmap(self):
        return self.forms.dofmap

    @property
    def mu(self) -> float:
        return self.forms.mu

    @property
    def rho(self) -> float:
        return self.forms.rho

    @property
    def c(self) -> float:
        return self.forms.c

    @property
    def n_in(self) -> int:
        return len(self.dofmap.in_nodes)

    @property
    def n_out(self) -> int:
        return len(self.dofmap.out_nodes)

    @cached_property
    def dynamics(self):
        """``-mu Stiff + rho Adv - c Mass`` on all velocity dofs."""
        f = self.forms
        return (-f.mu * f.stiff + f.rho * f.adv - f.c * f.mass).tocsr()

    @cached_property
    def mass_ff(self):
        F = self.dofmap.free
        return self.forms.mass[F][:, F].tocsr()

    @cached_property
    def div_f(self):
        return self.forms.div[:, self.dofmap.free].tocsr()

    # -- state helpers ----------------------------------------------------
    def velocity(self, state: FlowState) -> np.ndarray:
        p = np.asarray(state.p, dtype=float)
        if p.shape != (self.dofmap.n_v,):
            raise ValueError(f"momentum has shape {p.shape}, expected ({self.dofmap.n_v},)")
        return p / self.rho

    def state_from_velocity(self, v, P=None, t: float = 0.0) -> FlowState:
        v = np.asarray(v, dtype=float)
        P = np.zeros(self.dofmap.n_p) if P is None else np.asarray(P, dtype=float)
        return FlowState(self.rho * v, P, t)

    def lift(self, u_v) -> np.ndarray:
        return dirichlet_lifting(self.mesh, u_v)

    def factorization(self, key, A_ff, backend="lu") -> SaddleFactorization:
        """Cached saddle factorisation for free-dof block ``A_ff`` under ``key``."""
        k = (key, backend)
        if k not in self._cache:
            self._cache[k] = SaddleFactorization(A_ff, self.div_f.T.tocsr(), backend=backend)
        return self._cache[k]

    # -- energy -----------------------------------------------------------
    def hamiltonian(self, state: FlowState) -> float:
        p = np.asarray(state.p, dtype=float)
        if p.shape != (self.dofmap.n_v,):
            raise ValueError(f"momentum has shape {p.shape}, expected ({self.dofmap.n_v},)")
        return float(p @ (self.forms.mass @ p)) / (2.0 * self.rho)

    def dissipation_rate(self, state: FlowState) -> float:
        v = self.velocity(state)
        f = self.forms
        return -f.mu * float(v @ (f.stiff @ v)) - f.c * float(v @ (f.mass @ v))

    def output(self, state: FlowState, momentum_rate=None) -> PortOutput:
        y_sigma = consistent_boundary_flux(self.forms, state, BoundaryTag.IN, momentum_rate)
        y_v = self.dofmap.trace(self.velocity(state), BoundaryTag.OUT)
        return PortOutput(y_sigma, y_v)

    def supply_terms(self, output: PortOutput, u_v, u_sigma) -> tuple[float, float]:
        """Inflow and outflow boundary power ``(<y_sigma, u_v>, <y_v, u_sigma>)``."""
        u_v = np.zeros((self.n_in, 2)) if u_v is None else np.asarray(u_v, dtype=float)
        u_s = np.zeros((self.n_out, 2)) if u_sigma is None else np.asarray(u_sigma, dtype=float)
        if output.y_sigma.shape != u_v.shape or output.y_v.shape != u_s.shape:
            raise ValueError("port output and input dimensions differ")
        s_in = float(np.sum(output.y_sigma * u_v))
        tm = self.forms.trace_mass_out
        s_out = float(output.y_v[:, 0] @ (tm @ u_s[:, 0]) + output.y_v[:, 1] @ (tm @ u_s[:, 1]))
        return s_in, s_out

    def supply_rate(self, output: PortOutput, u_v, u_sigma) -> float:
        return sum(self.supply_terms(output, u_v, u_sigma))

    def verify_dissipativity(self, state: FlowState) -> float:
        """``v' (-mu Stiff + rho Adv - c Mass) v`` for a state with homogeneous
        Dirichlet traces; never positive up to rounding."""
        v = self.velocity(state)
        d = self.dofmap.dirichlet
        scale = max(1.0, float(np.abs(v).max(initial=0.0)))
        if np.any(np.abs(v[d]) > 1e-14 * scale):
            raise CompatibilityError("verify_dissipativity needs zero inflow and wall traces")
        f = self.forms
        return (-f.mu * float(v @ (f.stiff @ v)) + f.rho * float(v @ (f.adv @ v))
                - f.c * float(v @ (f.mass @ v)))

    def apply_dynamics(self, state: FlowState, u_sigma=None):
        """Weak momentum rate on free dofs and the constraint residual.

        Returns ``(r, Div v)`` with ``r = (Mass dp/dt)`` restricted to free
        dofs, i.e. ``-mu Stiff v + rho Adv v - c Mass v - Div' P + load``.
        """
        v = self.velocity(state)
        P = np.asarray(state.P, dtype=float)
        if P.shape != (self.dofmap.n_p,):
            raise ValueError(f"pressure has shape {P.shape}, expected ({self.dofmap.n_p},)")
        r = self.dynamics @ v - self.forms.div.T @ P + self.forms.neumann_load(u_sigma)
        return r[self.dofmap.free], self.forms.div @ v

    def stress_functional(self, state: FlowState, momentum_rate=None) -> np.ndarray:
        return stress_functional(self.forms, self.velocity(state), np.asarray(state.P, dtype=float),
                                 momentum_rate)

    # -- divergence-free states -------------------------------------------
    def project_divergence_free(self, w_free, tol: float = 1e-12) -> np.ndarray:
        """Mass-orthogonal projection of a free-dof vector onto ``ker Div``.

        Returns the full velocity vector (zero on Dirichlet dofs).
        """
        w_free = np.asarray(w_free, dtype=float)
        fac = self.factorization("projection", self.mass_ff)
        rhs = np.concatenate([self.mass_ff @ w_free, np.zeros(self.dofmap.n_p)])
        sol, _, _ = fac.solve(rhs, tol)
        v = np.zeros(self.dofmap.n_v)
        v[self.dofmap.free] = sol[: len(w_free)]
        return v

    def random_admissible_state(self, rng: np.random.Generator, energy: float = 1.0) -> FlowState:
        """Random discretely divergence-free state with zero Dirichlet traces,
        scaled to Hamiltonian ``energy``."""
        v = self.project_divergence_free(rng.standard_normal(len(self.dofmap.free)))
        state = self.state_from_velocity(v)
        h = self.hamiltonian(state)
        return self.state_from_velocity(v * np.sqrt(energy / h))
