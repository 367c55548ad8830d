"""Dense linear-algebra and scalar-optimization kernels.

Small, self-contained numerical routines shared by the simulation, regression
and bounding code: least squares, Cholesky solves with a positive-definiteness
verdict, the matrix exponential, and a heuristic 1-D maximizer.

Everything here is a pure function of its inputs; there is no shared mutable
state, so concurrent use is safe.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

# Relative pivot tolerance for Cholesky: a factorization is accepted only if
# every pivot exceeds PIVOT_TOL_FACTOR * max diagonal entry.  Semidefinite
# matrices are classified as not positive definite (the conservative verdict
# for the lower-bound computation).
PIVOT_TOL_FACTOR = 1e-12

# Defaults for maximize_scalar.  Any evaluation point yields a valid lower
# bound in the surrounding algorithm, so only tightness is at stake; a cheap
# coarse grid plus a short golden-section refinement is enough.
K_LO_DEFAULT = 1e-6
K_HI_DEFAULT = 1e6
COARSE_POINTS_DEFAULT = 33
REFINE_ITERS_DEFAULT = 30

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def least_squares(M: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Return argmin_x ||M x - b||, minimum-norm if M is rank deficient.

    Uses an orthogonal (SVD-based) factorization rather than the normal
    equations: the design matrices built downstream have near-collinear
    shifted-sequence columns.
    """
    M = np.asarray(M, dtype=float)
    b = np.asarray(b, dtype=float)
    if M.ndim != 2 or b.ndim != 1 or M.shape[0] != b.shape[0]:
        raise ValueError(f"incompatible shapes {M.shape} and {b.shape}")
    if M.shape[0] < M.shape[1]:
        raise ValueError(f"underdetermined system {M.shape}")
    x, _, _, _ = scipy.linalg.lstsq(M, b, lapack_driver="gelsd")
    return x


def cholesky_factor_batched(
    Q: np.ndarray, pivot_tol_factor: float = PIVOT_TOL_FACTOR
) -> tuple[np.ndarray, np.ndarray]:
    """Batched Cholesky of symmetric matrices with a per-matrix verdict.

    Q has shape (..., n, n) and is assumed symmetric (callers symmetrize).
    Returns (L, ok) where L is lower triangular with Q = L L^T where
    ok is True, and ok is False wherever some pivot fell at or below
    pivot_tol_factor * max diagonal entry.

    Implemented as an unblocked factorization with the loop over columns in
    Python and everything else vectorized over the batch, which is fast for
    the small n (<= 10) used here with large batches.
    """
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[-1]
    L = np.zeros_like(Q)
    diag = np.einsum("...ii->...i", Q)
    tol = pivot_tol_factor * np.maximum(diag.max(axis=-1), 0.0)
    ok = np.ones(Q.shape[:-2], dtype=bool)
    for j in range(n):
        d = Q[..., j, j] - np.einsum("...k,...k->...", L[..., j, :j], L[..., j, :j])
        ok &= d > tol
        d_safe = np.where(d > 0.0, d, 1.0)
        ljj = np.sqrt(d_safe)
        L[..., j, j] = ljj
        if j + 1 < n:
            s = Q[..., j + 1 :, j] - np.einsum(
                "...ik,...k->...i", L[..., j + 1 :, :j], L[..., j, :j]
            )
            L[..., j + 1 :, j] = s / ljj[..., None]
    return L, ok


def cholesky_solve_batched(
    Q: np.ndarray, rhs: np.ndarray, pivot_tol_factor: float = PIVOT_TOL_FACTOR
) -> tuple[np.ndarray, np.ndarray]:
    """Solve Q x = rhs for a batch of symmetric matrices.

    Returns (x, ok); entries of x where ok is False are meaningless.
    """
    L, ok = cholesky_factor_batched(Q, pivot_tol_factor)
    n = Q.shape[-1]
    y = np.zeros_like(rhs, dtype=float)
    for i in range(n):
        y[..., i] = (
            rhs[..., i] - np.einsum("...k,...k->...", L[..., i, :i], y[..., :i])
        ) / L[..., i, i]
    x = np.zeros_like(y)
    for i in range(n - 1, -1, -1):
        x[..., i] = (
            y[..., i]
            - np.einsum("...k,...k->...", L[..., i + 1 :, i], x[..., i + 1 :])
        ) / L[..., i, i]
    return x, ok


def cholesky_solve(
    Q: np.ndarray, rhs: np.ndarray, pivot_tol_factor: float = PIVOT_TOL_FACTOR
) -> np.ndarray | None:
    """Solve Q x = rhs if Q is positive definite, else return None.

    Q is symmetrized before factorization.  None is a verdict, not a failure:
    downstream it encodes a -inf lower bound.
    """
    Q = np.asarray(Q, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or rhs.shape != (Q.shape[0],):
        raise ValueError(f"incompatible shapes {Q.shape} and {rhs.shape}")
    Qs = 0.5 * (Q + Q.T)
    x, ok = cholesky_solve_batched(Qs[None], rhs[None], pivot_tol_factor)
    if not ok[0]:
        return None
    return x[0]


def expm(M: np.ndarray) -> np.ndarray:
    """Matrix exponential (scaling-and-squaring with Pade core)."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if M.shape[0] > 16:
        raise ValueError("expm is limited to matrices of order <= 16")
    return scipy.linalg.expm(M)


def maximize_scalar(
    f,
    lo: float = K_LO_DEFAULT,
    hi: float = K_HI_DEFAULT,
    coarse_points: int = COARSE_POINTS_DEFAULT,
    refine_iters: int = REFINE_ITERS_DEFAULT,
    vectorized: bool = False,
) -> tuple[float, float]:
    """Heuristic maximization of f over [lo, hi].

    Evaluates f on a log-spaced grid of coarse_points, then refines with
    refine_iters golden-section steps on the subinterval bracketing the best
    grid point.  f may return -inf.  If every evaluation is -inf, returns
    (lo, -inf).

    With vectorized=True, f must accept an ndarray of points; refinement then
    proceeds by log-grid zoom rounds (one call per round, 9 points each,
    bracket shrinks 4x per round) instead of scalar golden-section steps,
    which is much cheaper when each batched call has high fixed cost.
    """
    if not (0.0 < lo < hi):
        raise ValueError("need 0 < lo < hi")
    grid = np.geomspace(lo, hi, coarse_points)
    if vectorized:
        vals = np.asarray(f(grid), dtype=float)
    else:
        vals = np.array([f(k) for k in grid], dtype=float)
    if np.all(np.isneginf(vals)):
        return lo, -np.inf
    i = int(np.argmax(vals))
    best_x, best_v = float(grid[i]), float(vals[i])
    a = float(grid[max(i - 1, 0)])
    b = float(grid[min(i + 1, coarse_points - 1)])

    if vectorized:
        for _ in range(max(1, refine_iters // 4)):
            sub = np.geomspace(a, b, 9)
            svals = np.asarray(f(sub), dtype=float)
            j = int(np.argmax(svals))
            if svals[j] > best_v:
                best_x, best_v = float(sub[j]), float(svals[j])
            a = float(sub[max(j - 1, 0)])
            b = float(sub[min(j + 1, 8)])
        return best_x, best_v

    # Golden-section search for the maximum on [a, b].
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = float(f(x1)), float(f(x2))
    for _ in range(refine_iters):
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = float(f(x1))
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = float(f(x2))
        for x, v in ((x1, f1), (x2, f2)):
            if v > best_v:
                best_x, best_v = x, v
    return best_x, best_v
