"""Sparse linear systems: Dirichlet elimination, direct and ILU(0)-GMRES solves."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numba import njit

from .errors import NumericalError

log = logging.getLogger(__name__)

DIRECT_THRESHOLD = 20_000
RESTART = 50


@dataclass
class SparseSystem:
    A: sp.csr_matrix
    b: np.ndarray
    constraints: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.A.shape[0]


@dataclass
class SolveStats:
    method: str
    iterations: int
    residual: float
    fallback: bool = False
    history: list = field(default_factory=list)


def apply_dirichlet(system: SparseSystem, constraints) -> SparseSystem:
    """Symmetric elimination of prescribed dofs.

    ``constraints`` is an iterable of (dof, value) pairs or a dict.  Repeated
    dofs with different values raise ValueError.
    """
    pairs = constraints.items() if isinstance(constraints, dict) else constraints
    fixed: dict[int, float] = dict(system.constraints)
    for dof, value in pairs:
        dof = int(dof)
        if not 0 <= dof < system.n:
            raise ValueError(f"constraint dof {dof} out of range")
        if dof in fixed and fixed[dof] != value:
            raise ValueError(f"conflicting constraints on dof {dof}: {fixed[dof]} vs {value}")
        fixed[dof] = float(value)
    if not fixed:
        return SparseSystem(system.A, system.b, {})
    dofs = np.fromiter(fixed.keys(), dtype=np.int64)
    vals = np.fromiter(fixed.values(), dtype=float)
    A = sp.csr_matrix(system.A)
    u = np.zeros(system.n)
    u[dofs] = vals
    b = np.asarray(system.b, dtype=float) - A @ u
    keep = np.ones(system.n)
    keep[dofs] = 0.0
    K = sp.diags(keep)
    A = (K @ A @ K + sp.diags(1.0 - keep)).tocsr()
    A.sort_indices()
    b[dofs] = vals
    return SparseSystem(A, b, fixed)


@njit(cache=True)
def _ilu0(indptr, indices, data):
    n = indptr.size - 1
    lu = data.copy()
    diag = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            if indices[p] == i:
                diag[i] = p
    iw = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        if diag[i] < 0:
            return lu, diag, i
        for p in range(indptr[i], indptr[i + 1]):
            iw[indices[p]] = p
        for p in range(indptr[i], indptr[i + 1]):
            k = indices[p]
            if k >= i:
                break
            lu[p] /= lu[diag[k]]
            for q in range(diag[k] + 1, indptr[k + 1]):
                w = iw[indices[q]]
                if w >= 0:
                    lu[w] -= lu[p] * lu[q]
        for p in range(indptr[i], indptr[i + 1]):
            iw[indices[p]] = -1
        if lu[diag[i]] == 0.0:
            return lu, diag, i
    return lu, diag, -1


@njit(cache=True)
def _ilu0_apply(indptr, indices, lu, diag, r):
    n = r.size
    y = r.copy()
    for i in range(n):
        s = y[i]
        for p in range(indptr[i], diag[i]):
            s -= lu[p] * y[indices[p]]
        y[i] = s
    for i in range(n - 1, -1, -1):
        s = y[i]
        for p in range(diag[i] + 1, indptr[i + 1]):
            s -= lu[p] * y[indices[p]]
        y[i] = s / lu[diag[i]]
    return y


class ILU0:
    """Zero-fill incomplete LU factorisation of a CSR matrix."""

    def __init__(self, A):
        A = sp.csr_matrix(A, dtype=float)
        A.sort_indices()
        self.indptr = A.indptr.astype(np.int64)
        self.indices = A.indices.astype(np.int64)
        self.lu, self.diag, bad = _ilu0(self.indptr, self.indices, A.data.astype(float))
        if bad >= 0:
            raise NumericalError(f"ILU(0) breakdown: zero pivot in row {bad}")

    def solve(self, r):
        return _ilu0_apply(self.indptr, self.indices, self.lu, self.diag, np.asarray(r, dtype=float))

    def as_operator(self, n):
        return spla.LinearOperator((n, n), matvec=self.solve, dtype=float)


def _relative_residual(A, x, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return r / nb if nb > 0 else r


def _check_rows(A):
    absrow = np.asarray(abs(A).sum(axis=1)).ravel()
    zero = np.flatnonzero(absrow == 0.0)
    if zero.size:
        raise NumericalError(f"singular system: row {zero[0]} is identically zero")


class DirectFactor:
    """Sparse LU factorisation reused across right-hand sides."""

    def __init__(self, A):
        self.A = sp.csc_matrix(A)
        try:
            self.lu = spla.splu(self.A)
        except RuntimeError as exc:
            raise NumericalError(f"direct factorisation failed: {exc}") from exc

    def solve(self, b, tol: float = 1e-10):
        b = np.asarray(b, dtype=float)
        x = self.lu.solve(b)
        res = _relative_residual(self.A, x, b)
        if not np.isfinite(res) or res > tol:
            # one step of iterative refinement before giving up
            x = x + self.lu.solve(b - self.A @ x)
            res = _relative_residual(self.A, x, b)
        if not np.isfinite(res) or res > tol:
            raise NumericalError(f"direct solve residual {res:.3e} exceeds {tol:.1e}", [res])
        return x, SolveStats("direct", 1, res)


def _gmres(A, b, tol, max_iter):
    history: list[float] = []
    M = ILU0(A).as_operator(A.shape[0])
    x, info = spla.gmres(
        A, b, rtol=tol, atol=0.0, restart=RESTART, maxiter=max_iter, M=M,
        callback=history.append, callback_type="pr_norm",
    )
    return x, info, history


def solve(system, tol: float = 1e-10, max_iter: int = 200, method: str = "auto"):
    """Solve a (constrained) sparse system to relative residual ``tol``.

    ``method`` is "auto", "direct" or "gmres".  Auto uses the direct path up
    to DIRECT_THRESHOLD unknowns; the Krylov path falls back to the direct
    factorisation when it stagnates.  Returns (x, SolveStats).
    """
    if not isinstance(system, SparseSystem):
        A, b = system
        system = SparseSystem(sp.csr_matrix(A), np.asarray(b, dtype=float))
    A = sp.csr_matrix(system.A)
    b = np.asarray(system.b, dtype=float)
    _check_rows(A)
    if not np.any(b):
        return np.zeros_like(b), SolveStats("trivial", 0, 0.0)
    n = A.shape[0]
    use_direct = method == "direct" or (method == "auto" and n <= DIRECT_THRESHOLD)
    if not use_direct:
        try:
            x, info, history = _gmres(A, b, tol, max_iter)
        except NumericalError as exc:
            log.warning("ILU(0) failed (%s); falling back to direct solve", exc)
            x, info, history = None, -1, []
        if x is not None:
            res = _relative_residual(A, x, b)
            if info == 0 and res <= tol:
                return x, SolveStats("gmres", len(history), res, history=history)
        log.info("GMRES stagnated; falling back to direct factorisation")
        try:
            x, stats = DirectFactor(A).solve(b, tol)
        except NumericalError as exc:
            raise NumericalError(str(exc), history + exc.residual_history) from exc
        stats.fallback = True
        stats.history = history
        return x, stats
    return DirectFactor(A).solve(b, tol)
