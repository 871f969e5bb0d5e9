"""Sparse storage and saddle-point solvers.

Matrices are :class:`scipy.sparse.csr_matrix` instances in canonical form
(sorted column indices, no duplicates).  The saddle systems solved here have
the block form::

    [ A   Bt ] [x]   [f]
    [ Bt'  0 ] [y] = [g]

with ``A + A'`` positive definite and ``Bt`` of full column rank.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import reverse_cuthill_mckee

SparseMatrix = sp.csr_matrix


class SolverError(RuntimeError):
    """Saddle solve failed (singular system or no convergence)."""


class SingularSystemError(SolverError):
    def __init__(self, message: str, location: int | None = None):
        self.location = location
        super().__init__(message)


def as_csr(m) -> sp.csr_matrix:
    """Canonical CSR copy: sorted indices, duplicates summed."""
    out = sp.csr_matrix(m, dtype=float)
    out.sum_duplicates()
    out.sort_indices()
    return out


def spmv(m: sp.csr_matrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != m.shape[1]:
        raise ValueError(f"dimension mismatch: matrix {m.shape} vs vector {x.shape}")
    return m @ x


def dump_matrix_market(m, path) -> None:
    """Write ``rows cols nnz`` then 0-based ``i j value`` lines."""
    c = sp.coo_matrix(m)
    with open(path, "w") as fh:
        fh.write(f"{c.shape[0]} {c.shape[1]} {c.nnz}\n")
        for i, j, v in zip(c.row.tolist(), c.col.tolist(), c.data.tolist()):
            fh.write(f"{i} {j} {v!r}\n")


def load_matrix_market(path) -> sp.csr_matrix:
    with open(path) as fh:
        rows, cols, nnz = (int(t) for t in fh.readline().split())
        data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
    return as_csr(sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))),
                                shape=(rows, cols)))


@dataclass
class SaddleSystem:
    A: sp.spmatrix
    Bt: sp.spmatrix
    rhs: np.ndarray
    # free-dof indices of the full problem that the unknowns correspond to
    free: np.ndarray | None = None

    def __post_init__(self):
        n, m = self.Bt.shape
        if self.A.shape != (n, n):
            raise ValueError(f"A is {self.A.shape}, Bt is {self.Bt.shape}")
        if len(self.rhs) != n + m:
            raise ValueError(f"rhs has length {len(self.rhs)}, expected {n + m}")

    def matrix(self) -> sp.csr_matrix:
        m = self.Bt.shape[1]
        return as_csr(sp.bmat([[self.A, self.Bt], [self.Bt.T, sp.csr_matrix((m, m))]]))


@dataclass
class SaddleFactorization:
    """Reusable solver for one saddle matrix.

    ``backend="lu"`` factors the full indefinite matrix (reverse Cuthill-McKee
    ordering, SuperLU with partial pivoting).  ``backend="gmres"`` runs GMRES
    with a block-diagonal preconditioner: incomplete LU of ``A`` and an exact
    factorisation of the Schur approximation ``B diag(A)^-1 B'``.
    """

    A: sp.spmatrix
    Bt: sp.spmatrix
    backend: str = "lu"
    maxiter: int = 2000
    _K: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        if self.backend not in ("lu", "gmres"):
            raise ValueError(f"unknown backend {self.backend!r}")
        self._K = SaddleSystem(self.A, self.Bt, np.zeros(sum(self.Bt.shape))).matrix()
        if self.backend == "lu":
            self._factor_lu()
        else:
            self._setup_gmres()

    @property
    def size(self) -> int:
        return self._K.shape[0]

    def _factor_lu(self):
        K = self._K
        if K.shape[0] == 0:
            self._perm = np.zeros(0, dtype=int)
            self._lu = None
            return
        empty = np.nonzero(np.diff(K.indptr) == 0)[0]
        if len(empty):
            raise SingularSystemError(f"structurally singular: empty row {empty[0]}", int(empty[0]))
        perm = reverse_cuthill_mckee(sp.csr_matrix(abs(K) + abs(K.T)), symmetric_mode=True)
        Kp = K[perm][:, perm].tocsc()
        try:
            lu = spla.splu(Kp, permc_spec="NATURAL", diag_pivot_thresh=1.0)
        except RuntimeError as exc:
            raise SingularSystemError(f"singular system: {exc}", _dependent_column(K)) from None
        d = np.abs(lu.U.diagonal())
        k = int(np.argmin(d))
        if d[k] <= 1e-13 * d.max():
            loc = int(perm[k])
            raise SingularSystemError(
                f"numerically singular system: pivot {d[k]:.3e} at unknown {loc}", loc
            )
        self._perm, self._lu = perm, lu

    def _setup_gmres(self):
        n, m = self.Bt.shape
        A = sp.csc_matrix(self.A)
        Bt = sp.csr_matrix(self.Bt)
        ilu = spla.spilu(A, drop_tol=1e-5, fill_factor=20)
        dinv = 1.0 / A.diagonal()
        S = sp.csc_matrix(Bt.T @ sp.diags(dinv) @ Bt)
        slu = spla.splu(S) if m else None

        def apply(r):
            out = np.empty_like(r)
            out[:n] = ilu.solve(r[:n])
            if m:
                out[n:] = slu.solve(r[n:])
            return out

        self._prec = spla.LinearOperator(self._K.shape, matvec=apply)

    def solve(self, rhs, tol: float = 1e-12):
        """Return ``(x, residual_norm, iterations)``.

        The residual is the 2-norm of the full block residual; it is
        guaranteed to satisfy ``residual <= tol * ||rhs||``.
        """
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != (self.size,):
            raise ValueError(f"rhs length {rhs.shape} does not match system size {self.size}")
        bnorm = np.linalg.norm(rhs)
        if bnorm == 0.0:
            return np.zeros_like(rhs), 0.0, 0
        if self.backend == "lu":
            x = self._lu_apply(rhs)
            r = rhs - self._K @ x
            its = 1
            # iterative refinement, rarely more than one pass
            while np.linalg.norm(r) > tol * bnorm and its < 4:
                x += self._lu_apply(r)
                r = rhs - self._K @ x
                its += 1
        else:
            x = np.zeros_like(rhs)
            its = 0
            r = rhs.copy()
            rtol = tol
            for _ in range(5):
                counter = [0]

                def cb(_):
                    counter[0] += 1

                dx, info = spla.gmres(self._K, r, rtol=rtol, atol=0.0,
                                      restart=min(200, self.maxiter),
                                      maxiter=self.maxiter, M=self._prec, callback=cb,
                                      callback_type="pr_norm")
                its += counter[0]
                x += dx
                r = rhs - self._K @ x
                if np.linalg.norm(r) <= tol * bnorm:
                    break
                rtol = max(1e-15, rtol * 0.1)
        res = float(np.linalg.norm(r))
        if not np.all(np.isfinite(x)) or res > tol * bnorm:
            raise SolverError(
                f"{self.backend} solve did not reach tolerance: residual {res:.3e} "
                f"> {tol:.1e} * {bnorm:.3e} after {its} iterations"
            )
        return x, res, its

    def _lu_apply(self, b):
        out = np.empty_like(b)
        out[self._perm] = self._lu.solve(b[self._perm])
        return out


def _dependent_column(K, max_dense: int = 4000) -> int | None:
    """Index of a linearly dependent unknown, from a pivoted dense QR; ``None``
    when the system is too large to densify."""
    if K.shape[0] > max_dense:
        return None
    _, R, piv = la.qr(K.toarray(), mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    small = np.nonzero(d <= 1e-13 * d[0])[0]
    return int(piv[small[0]]) if len(small) else None


def solve_saddle(system: SaddleSystem, tol: float = 1e-12, backend: str = "lu"):
    """Solve a :class:`SaddleSystem`; returns ``(solution, residual_norm, iterations)``."""
    fac = SaddleFactorization(system.A, system.Bt, backend=backend)
    return fac.solve(system.rhs, tol)
