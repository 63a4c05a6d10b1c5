# linalg.py
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp

DEFAULT_TOL = 1e-12
DENSE_LIMIT = 5000


class DimensionMismatchError(ValueError):
    pass


class NotPositiveDefiniteError(RuntimeError):
    pass


@dataclass
class SolveReport:
    iterations: int
    residual: float  # final ||b - Ax|| / ||b||
    converged: bool
    tol: float
    residual_history: List[float] = field(default_factory=list, repr=False)
    # ½xᵀAx - bᵀx per iterate; non-increasing for CG on SPD systems
    energy_history: List[float] = field(default_factory=list, repr=False)


# -------------------------
# CSR helpers
# -------------------------
def as_csr(A) -> sp.csr_matrix:
    """Canonical CSR: duplicates summed, column indices sorted within each row."""
    M = sp.csr_matrix(A, dtype=float)
    M.sum_duplicates()
    M.sort_indices()
    return M


def is_symmetric(A, rtol: float = 1e-12) -> bool:
    M = as_csr(A)
    scale = abs(M).max() if M.nnz else 0.0
    if scale == 0.0:
        return True
    diff = M - M.T
    return bool((abs(diff).max() if diff.nnz else 0.0) <= rtol * scale)


def spmv(A, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise DimensionMismatchError(f"matrix {A.shape} cannot multiply vector of shape {x.shape}")
    return np.asarray(A @ x).reshape(-1)


def dump_matrix_market(A, path, comment: str = "") -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    scipy.io.mmwrite(str(p), as_csr(A).tocoo(), comment=comment)
    return p


# -------------------------
# preconditioned CG
# -------------------------
def cg_solve(
    A,
    b,
    tol: float = DEFAULT_TOL,
    max_iter: Optional[int] = None,
    x0=None,
) -> Tuple[np.ndarray, SolveReport]:
    """
    Jacobi-preconditioned conjugate gradients.
    Non-convergence is reported (converged=False), not raised.
    """
    b = np.asarray(b, dtype=float).reshape(-1)
    n = b.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatchError(f"matrix {A.shape} does not match rhs of length {n}")
    if tol <= 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    if max_iter is None:
        max_iter = 10 * max(n, 1)

    diag = np.asarray(A.diagonal(), dtype=float)
    if np.any(diag <= 0.0):
        raise NotPositiveDefiniteError("non-positive diagonal entry; matrix is not SPD")
    inv_diag = 1.0 / diag

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float).reshape(-1)
    if x.shape[0] != n:
        raise DimensionMismatchError(f"x0 of length {x.shape[0]} does not match rhs of length {n}")

    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True, tol, [0.0], [0.0])

    r = b - spmv(A, x)
    res = float(np.linalg.norm(r)) / norm_b
    residuals = [res]
    energies = [-0.5 * float(x @ (b + r))]
    if res <= tol:
        return x, SolveReport(0, res, True, tol, residuals, energies)

    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    it = 0
    while it < max_iter:
        it += 1
        Ap = spmv(A, p)
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise NotPositiveDefiniteError(f"p^T A p = {pAp:.3e} <= 0 at iteration {it}; matrix is not SPD")
        step = rz / pAp
        x += step * p
        r -= step * Ap
        res = float(np.linalg.norm(r)) / norm_b
        if res <= tol:
            # recursive residual drifts; confirm against b - Ax and restart if needed
            r = b - spmv(A, x)
            res = float(np.linalg.norm(r)) / norm_b
            residuals.append(res)
            energies.append(-0.5 * float(x @ (b + r)))
            if res <= tol:
                break
            z = inv_diag * r
            p = z.copy()
            rz = float(r @ z)
            continue
        residuals.append(res)
        energies.append(-0.5 * float(x @ (b + r)))
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new

    res = float(np.linalg.norm(b - spmv(A, x))) / norm_b
    return x, SolveReport(it, res, res <= tol, tol, residuals, energies)


# -------------------------
# dense oracle
# -------------------------
def _dense(A) -> np.ndarray:
    M = A.toarray() if sp.issparse(A) else np.array(A, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatchError(f"matrix must be square, got {M.shape}")
    if M.shape[0] > DENSE_LIMIT:
        raise ValueError(f"dense path limited to n <= {DENSE_LIMIT}, got n={M.shape[0]}")
    return M


def cholesky(A):
    """scipy cho_factor of A; a failed factorisation means A is not SPD."""
    M = _dense(A)
    try:
        return scipy.linalg.cho_factor(M, lower=True, check_finite=True)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefiniteError(f"Cholesky factorisation failed: {e}") from e


def dense_solve(A, b) -> np.ndarray:
    b = np.asarray(b, dtype=float).reshape(-1)
    if A.shape[0] != b.shape[0]:
        raise DimensionMismatchError(f"matrix {A.shape} does not match rhs of length {b.shape[0]}")
    factor = cholesky(A)
    return scipy.linalg.cho_solve(factor, b)


def smallest_eigenvalue(A, tol: float = 1e-10, max_iter: int = 500, seed: int = 0) -> float:
    """Inverse iteration on the Cholesky factor; raises NotPositiveDefiniteError for non-SPD A."""
    M = _dense(A)
    factor = cholesky(M)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(M.shape[0])
    v /= np.linalg.norm(v)
    lam = float(v @ M @ v)
    for _ in range(max_iter):
        w = scipy.linalg.cho_solve(factor, v)
        w /= np.linalg.norm(w)
        lam_new = float(w @ M @ w)
        v = w
        if abs(lam_new - lam) <= tol * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    return lam
