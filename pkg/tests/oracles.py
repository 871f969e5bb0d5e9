"""Independent brute-force references used by the tests.

Nothing here reuses package internals: basis functions come from a monomial
Vandermonde solve on each physical triangle, integrals from a tensor Gauss
rule pulled back through the Duffy map, and element loops are plain Python.
"""
from math import factorial

import numpy as np

MONOMIALS = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def monomial_integral(a: int, b: int) -> float:
    """Exact integral of x^a y^b over the unit right triangle."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def triangle_gauss(verts, n: int = 12):
    """Points (Q, 2) and weights (Q,) integrating over the triangle ``verts``."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    v0, v1, v2 = (np.asarray(v, dtype=float) for v in verts)
    pts, wts = [], []
    jac = abs((v1[0] - v0[0]) * (v2[1] - v0[1]) - (v1[1] - v0[1]) * (v2[0] - v0[0]))
    for u, wu in zip(x, w):
        for s, ws in zip(x, w):
            # Duffy: (u, s) in the square -> (u, (1 - u) s) in the unit triangle
            r, t = u, (1.0 - u) * s
            pts.append(v0 + r * (v1 - v0) + t * (v2 - v0))
            wts.append(wu * ws * (1.0 - u) * jac)
    return np.array(pts), np.array(wts)


class LocalP2:
    """Quadratic Lagrange basis on one physical triangle via a Vandermonde solve."""

    def __init__(self, verts):
        v = np.asarray(verts, dtype=float)
        nodes = np.vstack([v, 0.5 * (v[0] + v[1]), 0.5 * (v[1] + v[2]), 0.5 * (v[2] + v[0])])
        V = np.array([[x ** a * y ** b for a, b in MONOMIALS] for x, y in nodes])
        self.coef = np.linalg.inv(V)  # column j holds the monomial weights of basis j

    def values(self, pts):
        x, y = np.asarray(pts, dtype=float).T
        mono = np.column_stack([x ** a * y ** b for a, b in MONOMIALS])
        return mono @ self.coef

    def gradients(self, pts):
        x, y = np.asarray(pts, dtype=float).T
        dx = np.column_stack([a * x ** max(a - 1, 0) * y ** b for a, b in MONOMIALS])
        dy = np.column_stack([b * x ** a * y ** max(b - 1, 0) for a, b in MONOMIALS])
        return np.stack([dx @ self.coef, dy @ self.coef], axis=-1)  # (Q, 6, 2)


def dense_operators(mesh, b=None, n: int = 12) -> dict:
    """Dense mass, stiffness, divergence and (unsymmetrised) convection matrices."""
    nodes = mesh.p2_nodes
    nn = len(nodes)
    nv = mesh.n_vertices
    M = np.zeros((nn, nn))
    K = np.zeros((nn, nn))
    C = np.zeros((nn, nn))
    Dx = np.zeros((nv, nn))
    Dy = np.zeros((nv, nn))
    for tri, cell in zip(mesh.triangles, mesh.p2_cells):
        verts = mesh.nodes[tri]
        basis = LocalP2(verts)
        pts, w = triangle_gauss(verts, n)
        phi = basis.values(pts)
        grad = basis.gradients(pts)
        # linear pressure basis through the same Vandermonde idea
        Vp = np.column_stack([np.ones(3), verts])
        lam = np.column_stack([np.ones(len(pts)), pts]) @ np.linalg.inv(Vp)
        idx = np.ix_(cell, cell)
        M[idx] += np.einsum("q,qi,qj->ij", w, phi, phi)
        K[idx] += np.einsum("q,qid,qjd->ij", w, grad, grad)
        if b is not None:
            bx, by = b(pts[:, 0], pts[:, 1])
            bg = grad[..., 0] * np.asarray(bx)[:, None] + grad[..., 1] * np.asarray(by)[:, None]
            C[idx] += np.einsum("q,qi,qj->ij", w, phi, bg)
        Dx[np.ix_(tri, cell)] -= np.einsum("q,qa,qj->aj", w, lam, grad[..., 0])
        Dy[np.ix_(tri, cell)] -= np.einsum("q,qa,qj->aj", w, lam, grad[..., 1])
    Z = np.zeros_like(M)
    return {
        "mass": np.block([[M, Z], [Z, M]]),
        "stiff": np.block([[K, Z], [Z, K]]),
        "conv": np.block([[C, Z], [Z, C]]),
        "div": np.hstack([Dx, Dy]),
        "scalar_mass": M,
    }


def l2_norm_squared(mesh, v, n: int = 10) -> float:
    """Integral of |v|^2 for a component-blocked P2 velocity."""
    nn = len(mesh.p2_nodes)
    total = 0.0
    for tri, cell in zip(mesh.triangles, mesh.p2_cells):
        verts = mesh.nodes[tri]
        pts, w = triangle_gauss(verts, n)
        phi = LocalP2(verts).values(pts)
        vx, vy = phi @ v[cell], phi @ v[cell + nn]
        total += float(w @ (vx ** 2 + vy ** 2))
    return total


def gradient_norm_squared(mesh, v, n: int = 10) -> float:
    """Integral of |grad v|^2 for a component-blocked P2 velocity."""
    nn = len(mesh.p2_nodes)
    total = 0.0
    for tri, cell in zip(mesh.triangles, mesh.p2_cells):
        verts = mesh.nodes[tri]
        pts, w = triangle_gauss(verts, n)
        g = LocalP2(verts).gradients(pts)
        for comp in (v[cell], v[cell + nn]):
            gc = np.einsum("qjd,j->qd", g, comp)
            total += float(w @ np.sum(gc ** 2, axis=1))
    return total


def dense_saddle_solve(A, Bt, f, g):
    """Solve the block system with numpy's dense LU."""
    A, Bt = np.asarray(A), np.asarray(Bt)
    m = Bt.shape[1]
    K = np.block([[A, Bt], [Bt.T, np.zeros((m, m))]])
    return np.linalg.solve(K, np.concatenate([f, g]))
