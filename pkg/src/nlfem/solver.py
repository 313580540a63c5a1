"""Conjugate gradients for the assembled SPD systems.

Small systems go to a dense Cholesky factorization.  CG stops with an
error on a direction of nonpositive curvature, which for these matrices
means the assembly is broken.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import IndefiniteMatrixError, InvalidArgumentError, NonConvergenceError

DENSE_LIMIT = 64


class SolveMethod(enum.Enum):
    CG = "cg"
    DENSE_DIRECT = "dense-direct"


@dataclass
class SolveReport:
    solution: np.ndarray
    iterations: int
    residual: float  # relative, ||A u - b|| / ||b||
    method: SolveMethod


def _operands(system):
    if hasattr(system, "matrix"):
        return system.matrix, np.asarray(system.rhs, dtype=float)
    A, b = system
    return A, np.asarray(b, dtype=float)


def conjugate_gradient(A, b: np.ndarray, tol: float = 1e-12, max_iter: int | None = None,
                       jacobi: bool = False, x0: np.ndarray | None = None,
                       callback: Callable[[np.ndarray], None] | None = None) -> SolveReport:
    """Plain (optionally Jacobi-preconditioned) CG on ``A x = b``."""
    n = b.shape[0]
    max_iter = 10 * n if max_iter is None else int(max_iter)
    bnorm = float(np.linalg.norm(b))
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return SolveReport(np.zeros(n), 0, 0.0, SolveMethod.CG)
    if jacobi:
        d = np.asarray(A.diagonal(), dtype=float)
        if np.any(d <= 0.0):
            raise IndefiniteMatrixError("nonpositive diagonal entry; matrix is not SPD")
        dinv = 1.0 / d
    r = b - A @ x
    z = r * dinv if jacobi else r
    p = z.copy()
    rz = float(r @ z)
    res = float(np.linalg.norm(r)) / bnorm
    it = 0
    while res > tol:
        if it >= max_iter:
            raise NonConvergenceError(
                f"CG reached {max_iter} iterations with relative residual {res:.3e} > {tol:.1e}")
        Ap = A @ p
        curv = float(p @ Ap)
        if not curv > 0.0:
            raise IndefiniteMatrixError(
                f"nonpositive curvature p^T A p = {curv:.3e} at iteration {it}; matrix is not SPD")
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        it += 1
        if callback is not None:
            callback(x)
        res = float(np.linalg.norm(r)) / bnorm
        z = r * dinv if jacobi else r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    # report the true residual, not the recursively updated one
    res = float(np.linalg.norm(b - A @ x)) / bnorm
    return SolveReport(x, it, res, SolveMethod.CG)


def dense_solve(A, b: np.ndarray) -> SolveReport:
    M = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    try:
        c = scipy.linalg.cho_factor(M)
    except np.linalg.LinAlgError as exc:
        raise IndefiniteMatrixError(f"Cholesky factorization failed: {exc}") from exc
    x = scipy.linalg.cho_solve(c, b)
    bnorm = float(np.linalg.norm(b))
    res = float(np.linalg.norm(b - M @ x)) / bnorm if bnorm > 0 else 0.0
    return SolveReport(x, 1, res, SolveMethod.DENSE_DIRECT)


def solve(system, tol: float = 1e-12, max_iter: int | None = None, method: str = "auto",
          jacobi: bool = False) -> SolveReport:
    """Solve a :class:`LinearSystem` (or a ``(matrix, rhs)`` pair).

    ``method`` is ``"auto"`` (dense for at most 64 unknowns, else CG),
    ``"cg"`` or ``"dense"``.
    """
    if not tol > 0.0 or not math.isfinite(tol):
        raise InvalidArgumentError(f"tolerance must be positive, got {tol!r}")
    A, b = _operands(system)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise InvalidArgumentError(f"matrix {A.shape} and rhs {b.shape} do not match")
    if method not in ("auto", "cg", "dense"):
        raise InvalidArgumentError(f"unknown solve method {method!r}")
    if method == "dense" or (method == "auto" and b.shape[0] <= DENSE_LIMIT):
        rep = dense_solve(A, b)
        if rep.residual > tol:
            # Cholesky is backward stable; a large residual means an ill-posed system
            raise NonConvergenceError(f"dense solve residual {rep.residual:.3e} exceeds {tol:.1e}")
        return rep
    return conjugate_gradient(sp.csr_matrix(A), b, tol, max_iter, jacobi)
