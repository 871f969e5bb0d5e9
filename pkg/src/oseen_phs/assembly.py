"""Taylor-Hood (P2 velocity / P1 pressure) operators for the Oseen node.

Velocity unknowns are stored component-blocked: dof ``c * n_nodes + k`` is
component ``c`` at quadratic node ``k`` (vertices first, then edge midpoints,
see :mod:`oseen_phs.mesh`).  Pressure unknowns are the vertex values.

Sign conventions used throughout the package::

    Mass[i, j]  =  (phi_i, phi_j)
    Stiff[i, j] =  (grad phi_i, grad phi_j)
    Adv         =  (A - A') / 2   with  A[i, j] = (phi_i, (b . grad) phi_j)
    Div[q, j]   = -(q, div phi_j)

so the weak momentum balance reads
``rho Mass dv/dt = -mu Stiff v + rho Adv v - c Mass v - Div' P + load``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp
import sympy

from .mesh import BoundaryTag, Mesh, Violation, validate_mesh
from .quadrature import edge_rule, triangle_rule
from .sparse import as_csr


class CompatibilityError(ValueError):
    """Boundary data violates a trace compatibility condition."""


# --------------------------------------------------------------------------
# degrees of freedom

@dataclass(frozen=True, eq=False)
class DofMap:
    n_nodes: int
    n_p: int
    in_nodes: np.ndarray
    out_nodes: np.ndarray
    wall_nodes: np.ndarray
    in_wall_nodes: np.ndarray
    dofs_in: np.ndarray
    dofs_wall: np.ndarray
    free: np.ndarray

    @property
    def n_v(self) -> int:
        return 2 * self.n_nodes

    @property
    def dirichlet(self) -> np.ndarray:
        return np.concatenate([self.dofs_in, self.dofs_wall])

    def vector_dofs(self, nodes) -> np.ndarray:
        nodes = np.asarray(nodes, dtype=np.int64)
        return np.concatenate([nodes, nodes + self.n_nodes])

    def trace(self, v, boundary) -> np.ndarray:
        """Nodal values of velocity ``v`` on the inflow or outflow trace, (n, 2)."""
        nodes = self.trace_nodes(boundary)
        return np.column_stack([v[nodes], v[nodes + self.n_nodes]])

    def trace_nodes(self, boundary) -> np.ndarray:
        tag = BoundaryTag(boundary)
        if tag is BoundaryTag.IN:
            return self.in_nodes
        if tag is BoundaryTag.OUT:
            return self.out_nodes
        raise ValueError("traces are defined on the inflow and outflow boundary only")


def _tagged_nodes(mesh: Mesh, tag) -> np.ndarray:
    nodes = set()
    for a, b in mesh.edges_with_tag(tag):
        nodes.update((int(a), int(b), mesh.midpoint_of(int(a), int(b))))
    return np.array(sorted(nodes), dtype=np.int64)


@lru_cache(maxsize=64)
def build_dofmap(mesh: Mesh) -> DofMap:
    nn = len(mesh.p2_nodes)
    in_nodes = _tagged_nodes(mesh, BoundaryTag.IN)
    out_nodes = _tagged_nodes(mesh, BoundaryTag.OUT)
    wall_all = _tagged_nodes(mesh, BoundaryTag.WALL)
    in_wall = np.intersect1d(in_nodes, wall_all)
    # closure points shared by inflow and wall carry the inflow value
    wall_nodes = np.setdiff1d(wall_all, in_nodes)
    for arr in (in_nodes, out_nodes, wall_nodes, in_wall):
        arr.setflags(write=False)
    dofs_in = np.concatenate([in_nodes, in_nodes + nn])
    dofs_wall = np.concatenate([wall_nodes, wall_nodes + nn])
    free = np.setdiff1d(np.arange(2 * nn), np.concatenate([dofs_in, dofs_wall]))
    return DofMap(nn, mesh.n_vertices, in_nodes, out_nodes, wall_nodes, in_wall,
                  dofs_in, dofs_wall, free)


# --------------------------------------------------------------------------
# reference basis

def p2_values(lam: np.ndarray) -> np.ndarray:
    """Quadratic Lagrange basis at barycentric points ``lam`` (Q, 3) -> (Q, 6)."""
    l0, l1, l2 = lam.T
    return np.column_stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0,
    ])


def p2_gradients(lam: np.ndarray, glam: np.ndarray) -> np.ndarray:
    """Physical gradients, shape (M, Q, 6, 2), from barycentric gradients (M, 3, 2)."""
    g0, g1, g2 = glam[:, None, 0], glam[:, None, 1], glam[:, None, 2]
    l0, l1, l2 = (lam[None, :, k, None] for k in range(3))
    return np.stack([
        (4 * l0 - 1) * g0, (4 * l1 - 1) * g1, (4 * l2 - 1) * g2,
        4 * (l1 * g0 + l0 * g1), 4 * (l2 * g1 + l1 * g2), 4 * (l0 * g2 + l2 * g0),
    ], axis=2)


def element_geometry(mesh: Mesh):
    """Triangle areas (M,) and barycentric gradients (M, 3, 2)."""
    p = mesh.nodes[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    twice_area = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (y[:, 1] - y[:, 0]) * (x[:, 2] - x[:, 0])
    glam = np.empty((len(p), 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        glam[:, i, 0] = (y[:, j] - y[:, k]) / twice_area
        glam[:, i, 1] = (x[:, k] - x[:, j]) / twice_area
    return 0.5 * twice_area, glam


def quadrature_points(mesh: Mesh, lam: np.ndarray) -> np.ndarray:
    """Physical coordinates (M, Q, 2) of barycentric points."""
    p = mesh.nodes[mesh.triangles]
    return np.einsum("qk,mkd->mqd", lam, p)


def _scatter(rows, cols, vals, shape) -> sp.csr_matrix:
    return as_csr(sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape))


def _scalar_p2(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    cells = mesh.p2_cells
    nn = len(mesh.p2_nodes)
    rows = np.broadcast_to(cells[:, :, None], local.shape)
    cols = np.broadcast_to(cells[:, None, :], local.shape)
    return _scatter(rows, cols, local, (nn, nn))


def _symmetric(s: sp.csr_matrix) -> sp.csr_matrix:
    # summation order in the scatter can break symmetry in the last bit
    return as_csr(0.5 * (s + s.T))


def _vectorize(s: sp.csr_matrix) -> sp.csr_matrix:
    return as_csr(sp.block_diag([s, s]))


# --------------------------------------------------------------------------
# bilinear forms

def assemble_scalar_mass(mesh: Mesh) -> sp.csr_matrix:
    lam, w = triangle_rule(4)
    area, _ = element_geometry(mesh)
    phi = p2_values(lam)
    local = np.einsum("q,qi,qj->ij", w, phi, phi)[None] * area[:, None, None]
    return _symmetric(_scalar_p2(mesh, local))


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    """Velocity mass matrix: ``x' Mass x`` is the squared L2 norm of the field."""
    return _vectorize(assemble_scalar_mass(mesh))


def assemble_stiffness(mesh: Mesh) -> sp.csr_matrix:
    """Vector Laplacian Gram matrix ``(grad phi_i, grad phi_j)`` (no viscosity)."""
    lam, w = triangle_rule(2)
    area, glam = element_geometry(mesh)
    g = p2_gradients(lam, glam)
    local = np.einsum("q,mqid,mqjd->mij", w, g, g) * area[:, None, None]
    return _vectorize(_symmetric(_scalar_p2(mesh, local)))


def _convection_at(mesh: Mesh, b, lam: np.ndarray) -> np.ndarray:
    """Convection field at quadrature points, shape (M, Q, 2)."""
    if callable(b):
        xq = quadrature_points(mesh, lam)
        bx, by = b(xq[..., 0], xq[..., 1])
        return np.stack(np.broadcast_arrays(bx, by, xq[..., 0])[:2], axis=-1).astype(float)
    coef = np.asarray(b, dtype=float).reshape(2, -1)
    nn = len(mesh.p2_nodes)
    if coef.shape[1] != nn:
        raise ValueError(f"convection coefficients have {coef.shape[1]} nodes, mesh has {nn}")
    phi = p2_values(lam)
    cell_coef = coef[:, mesh.p2_cells]  # (2, M, 6)
    return np.einsum("qi,dmi->mqd", phi, cell_coef)


def assemble_advection(mesh: Mesh, b, degree: int | None = None) -> sp.csr_matrix:
    """Skew-symmetrised convection matrix ``(A - A') / 2``.

    ``b`` is either P2 velocity coefficients (component-blocked vector) or a
    callable ``b(x, y) -> (bx, by)``.  Coefficients are integrated exactly
    (degree 5); callables use the 7-point degree-5 rule unless ``degree`` asks
    for more.  ``None`` or zero convection yields the zero matrix.
    """
    nn = len(mesh.p2_nodes)
    if b is None:
        return as_csr(sp.csr_matrix((2 * nn, 2 * nn)))
    if isinstance(b, TangentialField):
        bad = check_tangential(mesh, b)
        if bad:
            raise ValueError(f"convection field is not tangential: {bad[0]}")
    lam, w = triangle_rule(max(5, degree or 5))
    area, glam = element_geometry(mesh)
    phi = p2_values(lam)
    g = p2_gradients(lam, glam)
    bq = _convection_at(mesh, b, lam)
    bgrad = np.einsum("mqd,mqjd->mqj", bq, g)
    local = np.einsum("q,qi,mqj->mij", w, phi, bgrad) * area[:, None, None]
    A = _scalar_p2(mesh, local)
    S = as_csr(0.5 * (A - A.T))
    S.eliminate_zeros()
    return _vectorize(S)


def assemble_divergence(mesh: Mesh) -> sp.csr_matrix:
    """Pressure-velocity coupling ``Div[q, j] = -(q, div phi_j)``, shape (n_p, n_v)."""
    lam, w = triangle_rule(2)
    area, glam = element_geometry(mesh)
    g = p2_gradients(lam, glam)  # (M, Q, 6, 2)
    local = -np.einsum("q,qa,mqjd->madj", w, lam, g) * area[:, None, None, None]
    local = local.reshape(len(area), 3, 12)
    nn = len(mesh.p2_nodes)
    cols = np.hstack([mesh.p2_cells, mesh.p2_cells + nn])
    rows = np.broadcast_to(mesh.triangles[:, :, None], local.shape)
    cols = np.broadcast_to(cols[:, None, :], local.shape)
    return _scatter(rows, cols, local, (mesh.n_vertices, 2 * nn))


def assemble_pressure_mass(mesh: Mesh) -> sp.csr_matrix:
    area, _ = element_geometry(mesh)
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = ref[None] * area[:, None, None]
    rows = np.broadcast_to(mesh.triangles[:, :, None], local.shape)
    cols = np.broadcast_to(mesh.triangles[:, None, :], local.shape)
    return _scatter(rows, cols, local, (mesh.n_vertices, mesh.n_vertices))


def _edge_basis(s: np.ndarray) -> np.ndarray:
    """1-D quadratic basis at the endpoints a, midpoint m, endpoint b."""
    return np.column_stack([(1 - s) * (1 - 2 * s), 4 * s * (1 - s), s * (2 * s - 1)])


def assemble_trace_mass(mesh: Mesh, boundary) -> sp.csr_matrix:
    """Scalar boundary mass matrix on the trace nodes of ``boundary`` (in/out)."""
    dm = build_dofmap(mesh)
    nodes = dm.trace_nodes(boundary)
    pos = {int(k): i for i, k in enumerate(nodes)}
    s, w = edge_rule(3)
    N = _edge_basis(s)
    ref = np.einsum("q,qi,qj->ij", w, N, N)
    rows, cols, vals = [], [], []
    for a, b in mesh.edges_with_tag(boundary):
        a, b = int(a), int(b)
        length = np.linalg.norm(mesh.nodes[b] - mesh.nodes[a])
        loc = [pos[a], pos[mesh.midpoint_of(a, b)], pos[b]]
        rows.append(np.repeat(loc, 3))
        cols.append(np.tile(loc, 3))
        vals.append((length * ref).ravel())
    n = len(nodes)
    if not rows:
        return as_csr(sp.csr_matrix((n, n)))
    return _scatter(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (n, n))


# --------------------------------------------------------------------------
# interpolation, lifting and loads

def interpolate_velocity(mesh: Mesh, f: Callable) -> np.ndarray:
    """P2 nodal interpolant of ``f(x, y) -> (u1, u2)``, component-blocked."""
    x, y = mesh.p2_nodes.T
    u1, u2 = f(x, y)
    u1, u2, _ = np.broadcast_arrays(u1, u2, x)
    return np.concatenate([u1, u2]).astype(float)


def interpolate_pressure(mesh: Mesh, f: Callable) -> np.ndarray:
    x, y = mesh.nodes.T
    return np.broadcast_to(f(x, y), x.shape).astype(float)


def sample_trace(mesh: Mesh, boundary, f: Callable) -> np.ndarray:
    """Evaluate ``f(x, y) -> (f1, f2)`` at the trace nodes, shape (n, 2)."""
    nodes = build_dofmap(mesh).trace_nodes(boundary)
    x, y = mesh.p2_nodes[nodes].T
    f1, f2 = f(x, y)
    f1, f2, _ = np.broadcast_arrays(f1, f2, x)
    return np.column_stack([f1, f2]).astype(float)


def _check_trace_shape(u, n, what):
    u = np.asarray(u, dtype=float)
    if u.shape != (n, 2):
        raise ValueError(f"{what} must have shape ({n}, 2), got {u.shape}")
    return u


def dirichlet_lifting(mesh: Mesh, u_v) -> np.ndarray:
    """Right inverse of the inflow trace: inflow dofs set to ``u_v``, all others 0.

    ``u_v`` has shape (n_in, 2) ordered like ``build_dofmap(mesh).in_nodes``.
    Raises :class:`CompatibilityError` if ``u_v`` is nonzero where the inflow
    boundary meets the wall.
    """
    dm = build_dofmap(mesh)
    u = _check_trace_shape(u_v, len(dm.in_nodes), "inflow trace")
    corner = np.isin(dm.in_nodes, dm.in_wall_nodes)
    scale = max(1.0, float(np.abs(u).max(initial=0.0)))
    if np.any(np.abs(u[corner]) > 1e-13 * scale):
        k = int(dm.in_nodes[corner][np.argmax(np.abs(u[corner]).max(axis=1))])
        raise CompatibilityError(f"inflow data must vanish where inflow meets the wall (node {k})")
    v = np.zeros(dm.n_v)
    v[dm.in_nodes] = u[:, 0]
    v[dm.in_nodes + dm.n_nodes] = u[:, 1]
    v[dm.in_wall_nodes] = 0.0
    v[dm.in_wall_nodes + dm.n_nodes] = 0.0
    return v


def assemble_neumann_load(mesh: Mesh, u_sigma, trace_mass_out=None) -> np.ndarray:
    """Load vector ``(u_sigma, phi_i)`` on the outflow boundary.

    ``u_sigma`` holds nodal stress values (n_out, 2) of a P2 boundary density.
    """
    dm = build_dofmap(mesh)
    load = np.zeros(dm.n_v)
    if u_sigma is None:
        return load
    u = _check_trace_shape(u_sigma, len(dm.out_nodes), "outflow stress")
    tm = assemble_trace_mass(mesh, BoundaryTag.OUT) if trace_mass_out is None else trace_mass_out
    load[dm.out_nodes] = tm @ u[:, 0]
    load[dm.out_nodes + dm.n_nodes] = tm @ u[:, 1]
    return load


# --------------------------------------------------------------------------
# assembled operator bundle

@dataclass(frozen=True, eq=False)
class AssembledForms:
    mesh: Mesh
    dofmap: DofMap
    mass: sp.csr_matrix
    stiff: sp.csr_matrix
    adv: sp.csr_matrix
    div: sp.csr_matrix
    pressure_mass: sp.csr_matrix
    trace_mass_in: sp.csr_matrix
    trace_mass_out: sp.csr_matrix
    mu: float
    rho: float
    c: float

    def neumann_load(self, u_sigma) -> np.ndarray:
        return assemble_neumann_load(self.mesh, u_sigma, self.trace_mass_out)


def assemble_forms(mesh: Mesh, mu: float, rho: float, c: float = 0.0,
                   convection=None) -> AssembledForms:
    """Assemble every operator of the discrete node on ``mesh``.

    ``mu = 0`` is accepted (inviscid conservative limit); ``rho`` must be
    positive and ``c`` nonnegative.  Meshes without outflow edges are refused,
    since the pressure level would be undetermined.
    """
    if not (mu >= 0 and rho > 0 and c >= 0):
        raise ValueError(f"need mu >= 0, rho > 0, c >= 0; got mu={mu}, rho={rho}, c={c}")
    problems = validate_mesh(mesh)
    if problems:
        raise ValueError("invalid mesh: " + "; ".join(map(str, problems)))
    dm = build_dofmap(mesh)
    return AssembledForms(
        mesh=mesh,
        dofmap=dm,
        mass=assemble_mass(mesh),
        stiff=assemble_stiffness(mesh),
        adv=assemble_advection(mesh, convection),
        div=assemble_divergence(mesh),
        pressure_mass=assemble_pressure_mass(mesh),
        trace_mass_in=assemble_trace_mass(mesh, BoundaryTag.IN),
        trace_mass_out=assemble_trace_mass(mesh, BoundaryTag.OUT),
        mu=float(mu), rho=float(rho), c=float(c),
    )


def stress_functional(forms: AssembledForms, v, P, momentum_rate=None) -> np.ndarray:
    """Residual functional ``<div sigma, phi_i> + <sigma, grad phi_i>`` for all i.

    ``sigma = mu grad v - P I``; the interior divergence is replaced by the
    momentum equation, ``div sigma = dp/dt - rho (b . grad) v + c v``.
    """
    g = forms.mu * (forms.stiff @ v) - forms.rho * (forms.adv @ v) + forms.c * (forms.mass @ v)
    g = g + forms.div.T @ P
    if momentum_rate is not None:
        g = g + forms.mass @ momentum_rate
    return g


def consistent_boundary_flux(forms: AssembledForms, state, boundary, momentum_rate=None) -> np.ndarray:
    """Normal stress ``(mu grad v - P I) n`` on ``boundary`` as functional values.

    Returns an (n_trace, 2) array whose entry ``[k, c]`` is the stress
    functional tested with the basis function of component ``c`` at trace node
    ``k``.  ``momentum_rate`` (full velocity-dof vector of dp/dt) is needed
    for unsteady states; steady states omit it.  The state must come from a
    solve with the same ``forms``; this is not checked.
    """
    v = np.asarray(state.p, dtype=float) / forms.rho
    g = stress_functional(forms, v, np.asarray(state.P, dtype=float), momentum_rate)
    return forms.dofmap.trace(g, boundary)


# --------------------------------------------------------------------------
# tangential convection fields

_X, _Y = sympy.symbols("x y", real=True)


@dataclass(frozen=True)
class TangentialField:
    """Convection field ``b = (d psi/dy, -d psi/dx)`` from a stream function."""

    psi: sympy.Expr
    bx: sympy.Expr
    by: sympy.Expr

    def __post_init__(self):
        object.__setattr__(self, "_fx", sympy.lambdify((_X, _Y), self.bx, "numpy"))
        object.__setattr__(self, "_fy", sympy.lambdify((_X, _Y), self.by, "numpy"))

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        bx = np.broadcast_to(self._fx(x, y), x.shape).astype(float)
        by = np.broadcast_to(self._fy(x, y), x.shape).astype(float)
        return bx, by

    @property
    def divergence(self) -> sympy.Expr:
        return sympy.simplify(sympy.diff(self.bx, _X) + sympy.diff(self.by, _Y))


def generate_tangential_field(mesh: Mesh, stream_function) -> TangentialField:
    """Divergence-free field from a closed-form stream function.

    ``stream_function`` is a sympy expression or a string in ``x`` and ``y``;
    it should be constant on the boundary so the field has no normal
    component there (see :func:`check_tangential`).
    """
    psi = sympy.sympify(stream_function, locals={"x": _X, "y": _Y})
    return TangentialField(psi, sympy.diff(psi, _Y), -sympy.diff(psi, _X))


def outward_normals(mesh: Mesh) -> np.ndarray:
    """Unit outward normal of every tagged boundary edge, shape (K, 2)."""
    normals = np.empty((len(mesh.boundary_edges), 2))
    owner = {}
    for t, tri in enumerate(mesh.triangles):
        for k in range(3):
            a, b = int(tri[k]), int(tri[(k + 1) % 3])
            owner[(min(a, b), max(a, b))] = int(tri[(k + 2) % 3])
    for e, (a, b) in enumerate(mesh.boundary_edges):
        t = mesh.nodes[b] - mesh.nodes[a]
        n = np.array([t[1], -t[0]]) / np.linalg.norm(t)
        opp = owner.get((min(a, b), max(a, b)))
        if opp is not None and n @ (mesh.nodes[opp] - mesh.nodes[a]) > 0:
            n = -n
        normals[e] = n
    return normals


def check_tangential(mesh: Mesh, field, tol: float = 1e-10) -> list[Violation]:
    """Flag boundary edges where ``|b . n| > tol`` at a 3-point Gauss node."""
    s, _ = edge_rule(3)
    normals = outward_normals(mesh)
    out = []
    for e, ((a, b), tag) in enumerate(zip(mesh.boundary_edges, mesh.boundary_tags)):
        pts = mesh.nodes[a][None] + s[:, None] * (mesh.nodes[b] - mesh.nodes[a])[None]
        bx, by = field(pts[:, 0], pts[:, 1])
        flux = np.abs(np.asarray(bx) * normals[e, 0] + np.asarray(by) * normals[e, 1])
        if flux.max() > tol:
            out.append(Violation("normal flow", f"boundary edge {e} ({tag.value}), |b.n| = {flux.max():.3e}"))
    return out
