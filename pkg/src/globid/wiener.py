"""Nonlinear-regression structure for Wiener-model identification.

Given a sampled dataset and ARX orders (N, M), the one-step prediction error
is e = A(p) [1; x] where p = (gamma, emax) are the Hill parameters, x the ARX
coefficients, and A(p) = [F(p), -U] concatenates a Toeplitz block of inverted
outputs f_p(k) with a Toeplitz block of inputs.  This module builds A, its
parameter gradient, and certified per-box bounds on the Taylor remainder of
A(p) around a box center, which the bounding code turns into lower bounds.

Conventions:
  * a_k = (E0 - y(k)) / (y(k) - E0 + emax), and f_p(k) = a_k^(1/gamma).
  * a_k = 0 (i.e. y(k) = E0) maps to 0 for f and all its partials; these are
    the continuous limits, and sample 0 always has a_0 = 0.
  * The input block is stored negated inside A so the residual is literally
    A(p) [1; x] with x = (alpha_1..alpha_N, beta_1..beta_M).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .pkpd import Dataset

# Invertibility margin for y(k) - E0 + emax (BIS units).
INVERTIBILITY_MARGIN = 1e-6
# The search always assumes an exponent gamma > 1.
GAMMA_FLOOR = 1.0 + 1e-9


class InvertibilityError(ValueError):
    """The Hill function is not invertible at some sample for the given box."""

    def __init__(self, message: str, sample: int | None = None):
        super().__init__(message)
        self.sample = sample


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in parameter space, lower <= upper componentwise."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def lengths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.lengths))

    def vertices(self) -> np.ndarray:
        """All 2^q corners, in binary-counter order over the dimensions."""
        cols = [(self.lower[i], self.upper[i]) for i in range(self.dim)]
        return np.array(list(product(*cols)))

    def contains(self, p: np.ndarray) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.lower) and np.all(p <= self.upper))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(size, self.dim))


@dataclass(frozen=True)
class BoxViolation:
    sample: int
    value: float

    def __str__(self):
        return (
            f"invertibility fails at sample {self.sample}: "
            f"y - E0 + emax = {self.value:.6g} <= margin"
        )


@dataclass(frozen=True)
class ProblemConfig:
    """Dataset plus ARX orders; the immutable carrier of one identification."""

    dataset: Dataset
    N: int
    M: int
    E0: float | None = None

    def __post_init__(self):
        if self.N < 1 or self.M < 1:
            raise ValueError("ARX orders must be >= 1")
        if self.E0 is None:
            object.__setattr__(self, "E0", self.dataset.E0)
        n = self.dataset.n
        if n < self.ell + 2 + self.N + self.M:
            raise ValueError("dataset too short to overdetermine the regression")

    @property
    def ell(self) -> int:
        return max(self.N, self.M)

    @property
    def m(self) -> int:
        return self.dataset.n - self.ell + 1


def hill_inverse(p, y, E0: float):
    """Normalized concentration c = a^(1/gamma), a = (E0-y)/(y-E0+emax).

    Vectorized over y.  Raises InvertibilityError when y > E0 or when
    y - E0 + emax <= 0 at some sample.
    """
    gamma, emax = float(p[0]), float(p[1])
    y = np.asarray(y, dtype=float)
    num = E0 - y
    den = y - E0 + emax
    bad = np.atleast_1d(num < 0)
    if bad.any():
        k = int(np.argmax(bad))
        raise InvertibilityError(f"y exceeds E0 at sample {k}", sample=k)
    bad = np.atleast_1d(den <= 0)
    if bad.any():
        k = int(np.argmax(bad))
        raise InvertibilityError(
            f"y - E0 + emax = {np.atleast_1d(den)[k]:.6g} <= 0 at sample {k}",
            sample=k,
        )
    a = num / den
    c = np.where(a > 0.0, np.power(np.where(a > 0.0, a, 1.0), 1.0 / gamma), 0.0)
    return c if c.ndim else float(c)


def _partials(p, y, E0: float):
    """a, f and first partials of f at every sample (a=0 handled as limit 0)."""
    gamma, emax = float(p[0]), float(p[1])
    y = np.asarray(y, dtype=float)
    num = E0 - y
    den = y - E0 + emax
    a = num / den
    pos = a > 0.0
    a_safe = np.where(pos, a, 1.0)
    f = np.where(pos, a_safe ** (1.0 / gamma), 0.0)
    loga = np.where(pos, np.log(a_safe), 0.0)
    df_dg = np.where(pos, -f * loga / gamma**2, 0.0)
    df_de = np.where(pos, -f / (gamma * den), 0.0)
    return a, f, df_dg, df_de


def second_partials(p, y, E0: float):
    """(d2/dgamma2, d2/dgamma dEmax, d2/dEmax2) of f_p at every sample."""
    gamma, emax = float(p[0]), float(p[1])
    y = np.asarray(y, dtype=float)
    num = E0 - y
    den = y - E0 + emax
    if np.any(np.atleast_1d(den <= 0)):
        k = int(np.argmax(np.atleast_1d(den <= 0)))
        raise InvertibilityError(f"not invertible at sample {k}", sample=k)
    a = num / den
    pos = a > 0.0
    a_safe = np.where(pos, a, 1.0)
    f = np.where(pos, a_safe ** (1.0 / gamma), 0.0)
    L = np.where(pos, np.log(a_safe), 0.0)
    d2g = np.where(pos, L * f * (2.0 * gamma + L) / gamma**4, 0.0)
    d2c = np.where(pos, f * (gamma + L) / (gamma**3 * den), 0.0)
    d2e = np.where(pos, f * (gamma + 1.0) / (gamma**2 * den**2), 0.0)
    if d2g.ndim:
        return d2g, d2c, d2e
    return float(d2g), float(d2c), float(d2e)


def _toeplitz_from_samples(vals: np.ndarray, ell: int, n: int, width: int) -> np.ndarray:
    """Columns j = 0..width-1 hold vals[ell-j .. n-j] (rows i = 0..n-ell)."""
    return np.column_stack([vals[ell - j : n + 1 - j] for j in range(width)])


def build_design(config: ProblemConfig, p) -> np.ndarray:
    """A(p) = [F(p), -U], shape (n-ell+1) x (N+M+1)."""
    ds, N, M, ell, n = config.dataset, config.N, config.M, config.ell, config.dataset.n
    f = hill_inverse(p, ds.y, config.E0)
    F = _toeplitz_from_samples(np.asarray(f), ell, n, N + 1)
    U = _toeplitz_from_samples(np.asarray(ds.u, dtype=float), ell - 1, n - 1, M)
    return np.hstack([F, -U])


def gradient_design(config: ProblemConfig, p) -> tuple[np.ndarray, np.ndarray]:
    """(dA/dgamma, dA/demax); both are zero on the input block."""
    ds, N, M, ell, n = config.dataset, config.N, config.M, config.ell, config.dataset.n
    den = np.asarray(ds.y, dtype=float) - config.E0 + float(p[1])
    if np.any(den <= 0):
        k = int(np.argmax(den <= 0))
        raise InvertibilityError(f"not invertible at sample {k}", sample=k)
    _, _, dg, de = _partials(p, ds.y, config.E0)
    zeros = np.zeros((n - ell + 1, M))
    dA_g = np.hstack([_toeplitz_from_samples(dg, ell, n, N + 1), zeros])
    dA_e = np.hstack([_toeplitz_from_samples(de, ell, n, N + 1), zeros])
    return dA_g, dA_e


# --- interval helpers (pairs of lo/hi arrays, outward-safe by candidates) --


def _iv_mul(alo, ahi, blo, bhi):
    c1, c2, c3, c4 = alo * blo, alo * bhi, ahi * blo, ahi * bhi
    return (
        np.minimum(np.minimum(c1, c2), np.minimum(c3, c4)),
        np.maximum(np.maximum(c1, c2), np.maximum(c3, c4)),
    )


def _iv_abs_sup(lo, hi):
    return np.maximum(np.abs(lo), np.abs(hi))


def hessian_entry_bounds(box: Box, y, E0: float):
    """Per-sample bounds (Rgg, Rge, Ree) on |each Hessian entry| over the box.

    H is the 2x2 Hessian of f_p(k) in (gamma, emax).  Each entry's supremum
    of absolute value is bounded by the natural interval extension of its
    closed form.  Samples with y = E0 have identically zero Hessians and
    contribute 0.
    """
    y = np.asarray(y, dtype=float)
    g_lo, g_hi = float(box.lower[0]), float(box.upper[0])
    e_lo, e_hi = float(box.lower[1]), float(box.upper[1])
    num = E0 - y
    d_lo = y - E0 + e_lo
    d_hi = y - E0 + e_hi
    if np.any(num < 0):
        k = int(np.argmax(num < 0))
        raise InvertibilityError(f"y exceeds E0 at sample {k}", sample=k)
    if np.any(d_lo <= 0):
        k = int(np.argmin(d_lo))
        raise InvertibilityError(
            f"box violates invertibility at sample {k}", sample=k
        )
    pos = num > 0.0
    # a is decreasing in emax, so its interval is exact.
    a_lo = np.where(pos, num / d_hi, 1.0)
    a_hi = np.where(pos, num / d_lo, 1.0)
    L_lo, L_hi = np.log(a_lo), np.log(a_hi)
    # t = 1/gamma in [1/g_hi, 1/g_lo], strictly positive.
    t_lo, t_hi = 1.0 / g_hi, 1.0 / g_lo
    w_lo, w_hi = _iv_mul(L_lo, L_hi, np.full_like(L_lo, t_lo), np.full_like(L_lo, t_hi))
    P_lo, P_hi = np.exp(w_lo), np.exp(w_hi)  # a^(1/gamma)

    # d2/dgamma2 = L * P * (2 gamma + L) / gamma^4
    s_lo, s_hi = 2.0 * g_lo + L_lo, 2.0 * g_hi + L_hi
    m_lo, m_hi = _iv_mul(L_lo, L_hi, P_lo, P_hi)
    m_lo, m_hi = _iv_mul(m_lo, m_hi, s_lo, s_hi)
    gg_sup = _iv_abs_sup(m_lo, m_hi) / g_lo**4

    # d2/dgamma demax = P * (gamma + L) / (gamma^3 * den)
    s_lo, s_hi = g_lo + L_lo, g_hi + L_hi
    m_lo, m_hi = _iv_mul(P_lo, P_hi, s_lo, s_hi)
    cc_sup = _iv_abs_sup(m_lo, m_hi) / (g_lo**3 * d_lo)

    # d2/demax2 = P * (gamma + 1) / (gamma^2 * den^2)
    ee_sup = P_hi * (g_hi + 1.0) / (g_lo**2 * d_lo**2)

    zero = np.zeros_like(gg_sup)
    return (
        np.where(pos, gg_sup, zero),
        np.where(pos, cc_sup, zero),
        np.where(pos, ee_sup, zero),
    )


def hessian_bound(box: Box, y, E0: float) -> np.ndarray:
    """Per-sample bound R_k >= sup over the box of ||H(p)||_F at sample k.

    Frobenius norm of the entrywise suprema (cross entry counted twice),
    which dominates the spectral norm.
    """
    gg, ge, ee = hessian_entry_bounds(box, y, E0)
    return np.sqrt(gg**2 + 2.0 * ge**2 + ee**2)


def _sample_multiplicity(config: ProblemConfig) -> np.ndarray:
    """How many F-block entries carry sample k (column reuse in the Toeplitz)."""
    n, ell, N, m = config.dataset.n, config.ell, config.N, config.m
    s = np.arange(n + 1)
    j_lo = np.maximum(ell - s, 0)
    j_hi = np.minimum(ell - s + m - 1, N)
    return np.maximum(j_hi - j_lo + 1, 0)


def remainder_radius(config: ProblemConfig, box: Box, pbar: np.ndarray) -> float:
    """r_B >= max over the box of ||A(p) - A(pbar) - grad A(pbar)(p - pbar)||_2.

    Lagrange form of the first-order Taylor remainder.  The entrywise bound
    (1/2) R_k d(pbar, B)^2 is taken in box-normalized coordinates: with
    dg, de the largest per-coordinate offsets from pbar to a vertex,
    |0.5 dp' H dp| <= 0.5 (Rgg dg^2 + 2 Rge dg de + Ree de^2) for every p in
    the box.  This is the same inequality as the isotropic Frobenius-times-
    distance form but does not let the long emax edge multiply the large
    gamma-curvature terms, which matters because the two coordinates live on
    scales ~17x apart.  The matrix 2-norm is then bounded by the Frobenius
    norm over all entries (input-block entries contribute zero).
    """
    pbar = np.asarray(pbar, dtype=float)
    if not box.contains(pbar):
        raise ValueError("expansion point must lie inside the box")
    gg, ge, ee = hessian_entry_bounds(box, config.dataset.y, config.E0)
    dg = float(max(pbar[0] - box.lower[0], box.upper[0] - pbar[0]))
    de = float(max(pbar[1] - box.lower[1], box.upper[1] - pbar[1]))
    per_sample = 0.5 * (gg * dg * dg + 2.0 * ge * dg * de + ee * de * de)
    mult = _sample_multiplicity(config)
    return float(np.sqrt(np.sum(mult * per_sample**2)))


def validate_box(
    config: ProblemConfig, box: Box, margin: float = INVERTIBILITY_MARGIN
) -> BoxViolation | None:
    """None if the Hill inversion is well defined on all of the box.

    Only the lower emax face matters: y - E0 + emax is increasing in emax.
    """
    y = np.asarray(config.dataset.y, dtype=float)
    worst = int(np.argmin(y))
    value = float(y[worst] - config.E0 + box.lower[1])
    if value <= margin:
        return BoxViolation(sample=worst, value=value)
    if np.any(y > config.E0 + 1e-9):
        k = int(np.argmax(y > config.E0 + 1e-9))
        return BoxViolation(sample=k, value=float(config.E0 - y[k]))
    return None


def adjust_box(
    config: ProblemConfig, box: Box, margin: float = INVERTIBILITY_MARGIN
) -> tuple[Box, bool]:
    """Clamp the box so the Hill inversion is defined everywhere on it.

    Raises the lower emax edge to E0 - min y + margin when the configured
    box violates invertibility, and clamps gamma lower edge to > 1.
    Returns (box, adjusted_flag).  Raises InvertibilityError if the box
    empties out.
    """
    lo = box.lower.copy()
    hi = box.upper.copy()
    adjusted = False
    if lo[0] < GAMMA_FLOOR:
        lo[0] = GAMMA_FLOOR
        adjusted = True
    y_min = float(np.min(config.dataset.y))
    # Doubled margin so the adjusted box strictly passes validate_box.
    emax_floor = config.E0 - y_min + 2.0 * margin
    if lo[1] < emax_floor:
        lo[1] = emax_floor
        adjusted = True
    if np.any(lo > hi):
        raise InvertibilityError(
            "box is empty after invertibility adjustment "
            f"(needs emax > {emax_floor:.4g}, box upper edge {hi[1]:.4g})"
        )
    return Box(lower=lo, upper=hi), adjusted


@dataclass
class WienerModel:
    """Adapter exposing the design-matrix family to the bounding code."""

    config: ProblemConfig

    @property
    def dim(self) -> int:
        return 2

    def design(self, p) -> np.ndarray:
        return build_design(self.config, p)

    def design_gradient(self, p) -> tuple[np.ndarray, ...]:
        return gradient_design(self.config, p)

    def remainder_radius(self, box: Box, pbar) -> float:
        return remainder_radius(self.config, box, pbar)

    def validate(self, box: Box) -> BoxViolation | None:
        return validate_box(self.config, box)
