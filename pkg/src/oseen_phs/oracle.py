"""Dense reference solutions on small meshes.

The velocity is restricted to the discretely divergence-free subspace spanned
by an orthonormal basis ``Z`` of ``ker Div`` (free dofs only), where the
saddle DAE becomes the plain linear ODE

    rho M_r x' = A_r x + G_r u_sigma(t) + g0,

solved by variation of constants with the matrix exponential.  Inflow data
must be constant in time; it enters through a fixed particular velocity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as la

from .node import DiscreteOseenNode

MAX_DENSE_DOFS = 1000


class OracleError(RuntimeError):
    """Dense regime exceeded or quadrature refinement failed."""


def divfree_basis(div_free) -> np.ndarray:
    """Orthonormal basis of the kernel of ``div_free`` (n_p, n_free).

    Uses a column-pivoted QR factorisation of the transpose; singular values
    below ``1e-10`` times the largest pivot count as zero.
    """
    D = div_free.toarray() if hasattr(div_free, "toarray") else np.asarray(div_free, dtype=float)
    m, n = D.shape
    if n > MAX_DENSE_DOFS:
        raise OracleError(f"{n} free dofs exceed the dense limit of {MAX_DENSE_DOFS}")
    if m == 0 or not np.any(D):
        return np.eye(n)
    Q, R, _ = la.qr(D.T, mode="full", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > 1e-10 * d[0]))
    return Q[:, rank:]


@dataclass(frozen=True, eq=False)
class ReducedSystem:
    """Divergence-free reduction of a node.

    ``offset`` is the full velocity vector carrying the (constant) inflow
    data; the velocity of reduced state ``x`` is ``offset + Z x`` on free dofs.
    ``G_r`` acts on the outflow stress flattened component-wise,
    ``[u[:, 0], u[:, 1]]``.
    """

    node: DiscreteOseenNode
    Z: np.ndarray
    M_r: np.ndarray
    A_r: np.ndarray
    G_r: np.ndarray
    g0: np.ndarray
    offset: np.ndarray

    @property
    def rho(self) -> float:
        return self.node.rho

    @property
    def size(self) -> int:
        return self.Z.shape[1]

    def generator(self) -> np.ndarray:
        """``A = M_r^-1 A_r / rho``."""
        return la.solve(self.M_r, self.A_r, assume_a="pos") / self.rho

    def forcing(self, u_sigma) -> np.ndarray:
        f = self.g0.copy()
        if u_sigma is not None:
            u = np.asarray(u_sigma, dtype=float)
            f += self.G_r @ np.concatenate([u[:, 0], u[:, 1]])
        return la.solve(self.M_r, f, assume_a="pos") / self.rho

    def velocity(self, x) -> np.ndarray:
        v = self.offset.copy()
        v[self.node.dofmap.free] += self.Z @ np.asarray(x, dtype=float)
        return v

    def reduce(self, v) -> np.ndarray:
        """Coordinates of a divergence-free velocity with the same inflow data."""
        F = self.node.dofmap.free
        return self.Z.T @ (np.asarray(v, dtype=float)[F] - self.offset[F])

    def energy_norm(self, x) -> float:
        """Square root of the Hamiltonian of the homogeneous part ``Z x``."""
        x = np.asarray(x, dtype=float)
        return float(np.sqrt(0.5 * self.rho * x @ self.M_r @ x))


def build_reduced_system(node: DiscreteOseenNode, u_v=None) -> ReducedSystem:
    """Reduce ``node`` for constant inflow data ``u_v`` (n_in, 2) or zero."""
    dm = node.dofmap
    F = dm.free
    if len(F) > MAX_DENSE_DOFS:
        raise OracleError(f"{len(F)} free dofs exceed the dense limit of {MAX_DENSE_DOFS}")
    f = node.forms
    div_f = node.div_f.toarray()
    Z = divfree_basis(div_f)
    offset = node.lift(np.zeros((node.n_in, 2)) if u_v is None else u_v)
    rhs = -(f.div @ offset)
    if np.any(rhs):
        offset[F] = np.linalg.lstsq(div_f, rhs, rcond=None)[0]
    M = node.mass_ff.toarray()
    dyn = node.dynamics[F][:, F].toarray()
    M_r = Z.T @ M @ Z
    A_r = Z.T @ dyn @ Z
    g0 = Z.T @ (node.dynamics @ offset)[F]
    n_out = node.n_out
    G = np.zeros((len(F), 2 * n_out))
    for j in range(2 * n_out):
        e = np.zeros((n_out, 2))
        e[j % n_out, j // n_out] = 1.0
        G[:, j] = f.neumann_load(e)[F]
    return ReducedSystem(node, Z, M_r, A_r, Z.T @ G, g0, offset)


def _simpson(E_h: np.ndarray, values: list, h: float) -> np.ndarray:
    """Composite Simpson sum of ``exp((t - tau_j) A) g_j`` via Horner in ``E_h``."""
    n = len(values) - 1
    acc = np.zeros_like(values[0])
    for j, g in enumerate(values):
        w = 1.0 if j in (0, n) else (4.0 if j % 2 else 2.0)
        acc = E_h @ acc + w * g
    return acc * h / 3.0


def mild_solution(red: ReducedSystem, x0, u_sigma: Callable[[float], np.ndarray] | None,
                  t: float, dt: float = 1e-2, tol: float = 1e-11, max_refinements: int = 14) -> np.ndarray:
    """Variation-of-constants solution at time ``t``.

    The convolution integral uses composite Simpson starting from spacing
    ``dt`` and halving until successive values differ by less than ``tol``
    (relative to ``max(1, |x|)``).
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    x0 = np.asarray(x0, dtype=float)
    A = red.generator()
    x_hom = la.expm(t * A) @ x0
    if t == 0:
        return x_hom
    forcing = (lambda s: red.forcing(u_sigma(s))) if u_sigma is not None else (lambda s: red.forcing(None))
    n = max(2, 2 * math.ceil(t / (2 * dt)))
    prev = None
    for _ in range(max_refinements):
        h = t / n
        E_h = la.expm(h * A)
        integral = _simpson(E_h, [forcing(j * h) for j in range(n + 1)], h)
        x = x_hom + integral
        if prev is not None and np.linalg.norm(x - prev) < tol * max(1.0, np.linalg.norm(x)):
            return x
        prev = x
        n *= 2
    raise OracleError(f"Simpson refinement did not settle below {tol:g} after {max_refinements} halvings")


def semigroup_contractivity_check(red: ReducedSystem, samples: int = 10, times=None,
                                  seed: int = 0) -> float:
    """Largest ratio ``|exp(tA) x0|_M / |x0|_M`` over random ``x0`` and ``t`` in (0, 1]."""
    A = red.generator()
    times = np.linspace(0.1, 1.0, 10) if times is None else np.asarray(times, dtype=float)
    X0 = np.random.default_rng(seed).standard_normal((red.size, samples))
    norm = lambda X: np.sqrt(np.einsum("ij,ik,kj->j", X, red.M_r, X))
    base = norm(X0)
    worst = 0.0
    for t in times:
        worst = max(worst, float(np.max(norm(la.expm(t * A) @ X0) / base)))
    return worst


def max_real_eigenvalue(red: ReducedSystem) -> float:
    """Largest real part among eigenvalues of the reduced generator."""
    if red.size == 0:
        return -np.inf
    lam = la.eigvals(red.A_r, red.M_r) / red.rho
    return float(np.max(lam.real))



def oracle_errors(node: DiscreteOseenNode, signal, state0, t_end: float, dts,
                  tol: float = 1e-12, backend: str = "lu") -> tuple[list[float], np.ndarray]:
    """Relative energy-norm errors of :func:`simulate` against :func:`mild_solution`.

    The inflow datum must be constant in time.  Returns the errors for each
    step size in ``dts`` and the reference velocity at ``t_end``.
    """
    from .integrate import simulate

    u0 = signal.inflow(0.0, node.n_in)
    for s in np.linspace(0.0, t_end, 7)[1:]:
        if not np.allclose(signal.inflow(s, node.n_in), u0, rtol=0, atol=1e-14):
            raise OracleError("the oracle needs inflow data that is constant in time")
    red = build_reduced_system(node, u0)
    v0 = node.velocity(state0)
    x0 = red.reduce(v0)
    if np.abs(red.velocity(x0) - v0).max(initial=0.0) > 1e-10 * max(1.0, np.abs(v0).max(initial=0.0)):
        raise OracleError("initial velocity is not divergence-free with the given inflow data")
    x_ref = mild_solution(red, x0, signal.u_sigma, t_end, dt=min(dts) if len(dts) else 1e-2)
    v_ref = red.velocity(x_ref)
    M = node.forms.mass
    ref_norm = np.sqrt(v_ref @ (M @ v_ref))
    if ref_norm <= 1e-12:
        # e.g. a uniform normal outflow stress only shifts the pressure
        raise OracleError(f"reference velocity vanishes (norm {ref_norm:.3e}); relative error undefined")
    errors = []
    for dt in dts:
        traj = simulate(node, signal, state0, t_end, dt, tol=tol, backend=backend, force=True)
        e = node.velocity(traj.final) - v_ref
        errors.append(float(np.sqrt(e @ (M @ e)) / ref_norm))
    return errors, v_ref
