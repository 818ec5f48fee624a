"""Sparse symmetric positive-definite solves.

SparseSym owns a row-compressed layout (full symmetric storage); matrix-vector
products go through scipy.sparse. The iterative solver is conjugate gradients
with Jacobi (diagonal) preconditioning, which absorbs the severe diagonal
scaling the h_F^{-5}/h_F^{-7} penalty weights produce. Dense Cholesky is the
fallback (and SPD probe) for small systems.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

__all__ = [
    "NotSPDError",
    "SolveReport",
    "SparseSym",
    "cg_solve",
    "dense_solve",
    "is_positive_definite",
]


class NotSPDError(RuntimeError):
    """The matrix failed a positive-definiteness requirement."""


@dataclass
class SparseSym:
    """Row-compressed symmetric matrix (both triangles stored)."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    @staticmethod
    def from_coo(n: int, rows, cols, vals) -> "SparseSym":
        A = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        A.sum_duplicates()
        A.sort_indices()
        return SparseSym(n, A.indptr, A.indices, A.data)

    @staticmethod
    def from_scipy(A) -> "SparseSym":
        A = A.tocsr()
        A.sort_indices()
        return SparseSym(A.shape[0], A.indptr, A.indices, A.data)

    def to_scipy(self) -> scipy.sparse.csr_matrix:
        return scipy.sparse.csr_matrix(
            (self.data, self.indices, self.indptr), shape=(self.n, self.n)
        )

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def diagonal(self) -> np.ndarray:
        return self.to_scipy().diagonal()

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.to_scipy() @ x

    def symmetry_defect(self) -> float:
        A = self.to_scipy()
        d = abs(A - A.T)
        return float(d.max()) if d.nnz else 0.0


@dataclass
class SolveReport:
    iterations: int
    residual: float      # final relative (preconditioned) residual
    converged: bool
    wall_time: float


def cg_solve(A: SparseSym, b: np.ndarray, tol: float = 1e-12,
             maxit: int | None = None, x0: np.ndarray | None = None):
    """Jacobi-preconditioned CG; returns (x, SolveReport).

    Non-convergence is reported, never silently accepted. A zero or negative
    diagonal entry is rejected up front as an SPD violation.
    """
    if not 0.0 < tol < 1.0:
        raise ValueError(f"tol must lie in (0, 1), got {tol}")
    t0 = time.perf_counter()
    n = A.n
    if maxit is None:
        maxit = 20 * n
    d = A.diagonal()
    if np.any(d <= 0.0):
        raise NotSPDError("non-positive diagonal entry; matrix cannot be SPD")
    M = 1.0 / d
    S = A.to_scipy()
    b = np.asarray(b, dtype=float)
    ref = float(np.sqrt(b @ (M * b)))
    if ref == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True, time.perf_counter() - t0)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - S @ x if x0 is not None else b.copy()
    z = M * r
    p = z.copy()
    rz = float(r @ z)
    it = 0
    rel = float(np.sqrt(rz)) / ref
    while rel > tol and it < maxit:
        Ap = S @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise NotSPDError(f"p^T A p = {pAp:.3e} <= 0 at iteration {it}")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = M * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
        rel = float(np.sqrt(max(rz, 0.0))) / ref
    return x, SolveReport(it, rel, rel <= tol, time.perf_counter() - t0)


def dense_solve(A, b) -> np.ndarray:
    """Cholesky solve for small dense SPD systems; raises NotSPDError if not SPD."""
    A = np.asarray(A, dtype=float)
    if A.shape[0] > 5000:
        raise ValueError(f"dense_solve is limited to dimension 5000, got {A.shape[0]}")
    try:
        c = scipy.linalg.cho_factor(A)
    except scipy.linalg.LinAlgError as exc:
        raise NotSPDError(f"Cholesky factorization failed: {exc}") from exc
    return scipy.linalg.cho_solve(c, np.asarray(b, dtype=float))


def is_positive_definite(A) -> bool:
    """SPD probe by attempted Cholesky factorization."""
    try:
        scipy.linalg.cho_factor(np.asarray(A, dtype=float))
        return True
    except scipy.linalg.LinAlgError:
        return False
