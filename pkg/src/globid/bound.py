"""Certified lower bounds for min ||A(p)[1;x]||^2 over a box.

The objective is expanded around the box center pbar:

    ||A(p)z||^2 = ||A(pbar)z||^2 + ||(A(p)-A(pbar))z||^2
                  + 2 z^T (A(p)-A(pbar))^T A(pbar) z,       z = [1; x].

Dropping the (nonnegative) middle term and splitting A(p)-A(pbar) into the
linear part grad A(pbar)(p-pbar) plus the Taylor remainder O(p) gives a
relaxation.  The remainder term is bounded below by the shift matrix

    M_k = -(1/k) A(pbar)^T A(pbar) - k r_B^2 I       (any k > 0),

where r_B bounds ||O(p)|| over the box.  What remains is linear in p, so its
minimum over the box sits at a vertex, and for each vertex the problem is an
unconstrained quadratic in x solvable in closed form (or -inf when the
quadratic is not positive definite).  The bound is maximized over k, with one
common k across vertices; the result is a valid lower bound for every k, so
the quality of the k search affects tightness only, never soundness.

This module is generic over a "model" exposing design(p), design_gradient(p)
and remainder_radius(box, pbar); both the Wiener identification problem and
the synthetic test problems implement that surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import (
    COARSE_POINTS_DEFAULT,
    K_HI_DEFAULT,
    K_LO_DEFAULT,
    REFINE_ITERS_DEFAULT,
    cholesky_solve,
    cholesky_solve_batched,
    maximize_scalar,
)
from .wiener import Box


@dataclass
class QuadraticForm:
    """x^T Q x + c^T x + d with Q symmetric."""

    Q: np.ndarray
    c: np.ndarray
    d: float

    def value(self, x: np.ndarray) -> float:
        return float(x @ self.Q @ x + self.c @ x + self.d)


@dataclass
class BoundReport:
    """Outcome of one box bound: L may be -inf when no k certified anything."""

    L: float
    k_star: float
    vertex_index: int
    vertex: np.ndarray
    per_vertex: np.ndarray
    r_B: float


@dataclass
class BoxCache:
    """Per-box quantities shared by every (vertex, k) evaluation."""

    pbar: np.ndarray
    A_bar: np.ndarray
    grads: tuple[np.ndarray, ...]
    r_B: float
    G: np.ndarray            # A_bar^T A_bar, symmetrized
    vertices: np.ndarray
    cross: np.ndarray        # stacked D_v^T A_bar + A_bar^T D_v per vertex


def prop1_shift(A_bar: np.ndarray, r_B: float, k: float) -> np.ndarray:
    """Shift matrix -(1/k) A_bar^T A_bar - k r_B^2 I.

    For any matrices M, N and k > 0, M^T N + N^T M >= -(1/k) N^T N - k M^T M;
    with N = A_bar and ||M|| <= r_B this underestimates the remainder cross
    term as a quadratic form.
    """
    if k <= 0.0:
        raise ValueError("k must be positive")
    n = A_bar.shape[1]
    return -(1.0 / k) * (A_bar.T @ A_bar) - (k * r_B**2) * np.eye(n)


def bilinear_decompose(A: np.ndarray, B: np.ndarray) -> QuadraticForm:
    """Rewrite [1, x^T] A^T B [1; x] as x^T Q x + c^T x + d.

    With the first row/column split off (A = [[a11, A12], [A21, A22]] and B
    likewise): Q = A12^T B12 + A22^T B22, c = a11 B12^T + b11 A12^T
    + A22^T B21 + B22^T A21, d = a11 b11 + A21^T B21.  These are exactly the
    blocks of A^T B; Q is returned symmetrized, which preserves the value of
    the form.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape or A.ndim != 2:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    S = A.T @ B
    Q = S[1:, 1:]
    return QuadraticForm(
        Q=0.5 * (Q + Q.T),
        c=S[0, 1:] + S[1:, 0],
        d=float(S[0, 0]),
    )


def make_cache(model, box: Box) -> BoxCache:
    """Evaluate the design family once at the box center."""
    pbar = box.center
    A_bar = model.design(pbar)
    grads = tuple(model.design_gradient(pbar))
    r_B = float(model.remainder_radius(box, pbar))
    G = A_bar.T @ A_bar
    G = 0.5 * (G + G.T)
    vertices = box.vertices()
    cross = np.empty((len(vertices), G.shape[0], G.shape[1]))
    for v_idx, v in enumerate(vertices):
        dp = v - pbar
        D = sum(g * dpi for g, dpi in zip(grads, dp))
        C = D.T @ A_bar
        cross[v_idx] = C + C.T
    return BoxCache(
        pbar=pbar, A_bar=A_bar, grads=grads, r_B=r_B, G=G,
        vertices=vertices, cross=cross,
    )


def lower_bound_at(cache: BoxCache, vertex: np.ndarray, k: float) -> float:
    """Closed-form vertex bound at one (vertex, k); -inf when Q is not PD.

    Assembles the total quadratic form from the three pieces (base norm,
    Prop-1 shift, linearized cross term), then evaluates its unconstrained
    minimum d - (1/4) c^T Q^{-1} c via a Cholesky solve.
    """
    base = bilinear_decompose(cache.A_bar, cache.A_bar)
    Mk = prop1_shift(cache.A_bar, cache.r_B, k)
    dp = np.asarray(vertex, dtype=float) - cache.pbar
    D = sum(g * dpi for g, dpi in zip(cache.grads, dp))
    cross = bilinear_decompose(D, cache.A_bar)
    Q = base.Q + Mk[1:, 1:] + 2.0 * cross.Q
    c = base.c + 2.0 * Mk[0, 1:] + 2.0 * cross.c
    d = base.d + Mk[0, 0] + 2.0 * cross.d
    x_star = cholesky_solve(Q, -0.5 * c)
    if x_star is None:
        return -np.inf
    return float(d + 0.5 * c @ x_star)


def _eval_vertices_batch(cache: BoxCache, karr: np.ndarray) -> np.ndarray:
    """Vertex bounds for every (k, vertex) pair; shape (len(karr), n_vertices).

    Algebraically identical to lower_bound_at: the three assembled pieces sum
    to S = (1 - 1/k) G - k r_B^2 I + (D_v^T A_bar + A_bar^T D_v), from which
    Q = S[1:,1:], c = 2 S[0,1:], d = S[0,0].
    """
    karr = np.atleast_1d(np.asarray(karr, dtype=float))
    G, cross, r_B = cache.G, cache.cross, cache.r_B
    n1 = G.shape[0]
    eye = np.eye(n1)
    S = (
        (1.0 - 1.0 / karr)[:, None, None, None] * G[None, None]
        - (karr * r_B**2)[:, None, None, None] * eye[None, None]
        + cross[None, :]
    )  # (K, V, n1, n1)
    Q = S[..., 1:, 1:]
    c = 2.0 * S[..., 0, 1:]
    d = S[..., 0, 0]
    x, ok = cholesky_solve_batched(Q, -0.5 * c)
    vals = d + 0.5 * np.einsum("...k,...k->...", c, x)
    return np.where(ok, vals, -np.inf)


def lower_bound(
    model,
    box: Box,
    k_lo: float = K_LO_DEFAULT,
    k_hi: float = K_HI_DEFAULT,
    coarse_points: int = COARSE_POINTS_DEFAULT,
    refine_iters: int = REFINE_ITERS_DEFAULT,
    cache: BoxCache | None = None,
) -> BoundReport:
    """Best-over-k certified lower bound for the box.

    Implements max over k of (min over vertices) of the closed-form vertex
    bound; the min over vertices is what makes a common k sound.  The report
    carries the winning k and the minimizing vertex at that k.
    """
    if cache is None:
        cache = make_cache(model, box)

    def phi(k):
        k = np.atleast_1d(np.asarray(k, dtype=float))
        vals = _eval_vertices_batch(cache, k).min(axis=1)
        return vals if len(vals) > 1 else float(vals[0])

    k_star, L = maximize_scalar(
        phi, k_lo, k_hi, coarse_points, refine_iters, vectorized=True
    )
    per_vertex = _eval_vertices_batch(cache, np.array([k_star]))[0]
    if np.isneginf(L):
        vertex_index = 0
    else:
        vertex_index = int(np.argmin(per_vertex))
        # phi(k_star) was one of the evaluated candidates; keep the max found.
        L = max(L, float(per_vertex.min()))
    return BoundReport(
        L=L,
        k_star=float(k_star),
        vertex_index=vertex_index,
        vertex=cache.vertices[vertex_index],
        per_vertex=per_vertex,
        r_B=cache.r_B,
    )
