"""Randomized verification suites, shared by the CLI and the test suite.

Three suites:
  * props  — the module-level invariants (matrix inequality, bilinear
             decomposition identity, Taylor-remainder soundness, derivative
             spot checks) on randomized instances.
  * bounds — lower-bound soundness: random sub-boxes of the initial box,
             each checked against many sampled parameter points.
  * oracle — branch-and-bound against a brute-force grid on a synthetic
             regression problem whose design matrix is affine in p (zero
             Taylor remainder, so bounds are easy to certify).

Each check returns (name, passed, detail); run_suite prints one line per
check and reports overall success.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bnb, bound, pkpd, wiener
from .numerics import least_squares
from .wiener import Box, ProblemConfig


@dataclass
class AffineModel:
    """Design family A(p) = A0 + p[0] A1 + p[1] A2: exact first-order Taylor."""

    A0: np.ndarray
    A1: np.ndarray
    A2: np.ndarray

    def design(self, p):
        return self.A0 + p[0] * self.A1 + p[1] * self.A2

    def design_gradient(self, p):
        return self.A1, self.A2

    def remainder_radius(self, box, pbar):
        return 0.0


@dataclass
class AffineProblem:
    """Problem-interface wrapper around AffineModel for branch_and_bound."""

    model: AffineModel

    @property
    def dim(self) -> int:
        return 2

    def objective_at(self, p):
        A = self.model.design(p)
        x = least_squares(-A[:, 1:], A[:, 0])
        r = A[:, 0] + A[:, 1:] @ x
        return x, float(r @ r)

    def bound_on(self, box):
        return bound.lower_bound(self.model, box)

    def validate(self, box):
        return None


def make_affine_problem(seed: int = 0, m: int = 12, n: int = 3) -> AffineProblem:
    """A synthetic instance with a nontrivial interior minimizer."""
    rng = np.random.default_rng(seed)
    A0 = rng.standard_normal((m, n + 1))
    A1 = 0.3 * rng.standard_normal((m, n + 1))
    A2 = 0.3 * rng.standard_normal((m, n + 1))
    return AffineProblem(AffineModel(A0=A0, A1=A1, A2=A2))


def grid_argmin(problem, box: Box, grid: int = 200):
    """Brute-force minimizer of f(p) over a grid; the oracle for the BnB."""
    g = np.linspace(box.lower[0], box.upper[0], grid)
    e = np.linspace(box.lower[1], box.upper[1], grid)
    best, best_p = np.inf, None
    for gi in g:
        for ei in e:
            _, v = problem.objective_at((gi, ei))
            if v < best:
                best, best_p = v, np.array([gi, ei])
    return best_p, best


def _patient1_config(N: int = 2) -> ProblemConfig:
    pat = pkpd.load_patient_table()[0]
    ds = pkpd.synthesize_dataset(pat, pkpd.BOLUS_INPUT, 1.0, 300.0)
    return ProblemConfig(dataset=ds, N=N, M=N)


def suite_props(seed: int, trials: int):
    rng = np.random.default_rng(seed)
    checks = []

    # Matrix inequality behind the shift matrix.
    worst = 0.0
    for _ in range(trials):
        M = rng.standard_normal((6, 3))
        N = rng.standard_normal((6, 3))
        k = 10.0 ** rng.uniform(-3, 3)
        S = M.T @ N + N.T @ M + (1.0 / k) * N.T @ N + k * M.T @ M
        scale = abs(np.trace((1.0 / k) * N.T @ N + k * M.T @ M))
        worst = min(worst, np.linalg.eigvalsh(0.5 * (S + S.T)).min() / scale)
    checks.append(("shift-matrix inequality", worst >= -1e-10,
                   f"worst normalized eigenvalue {worst:.2e}"))

    # Bilinear decomposition identity.
    worst = 0.0
    for _ in range(trials):
        A = rng.standard_normal((6, 4))
        B = rng.standard_normal((6, 4))
        x = rng.standard_normal(3)
        z = np.concatenate([[1.0], x])
        qf = bound.bilinear_decompose(A, B)
        scale = np.linalg.norm(A) * np.linalg.norm(B) * (1 + x @ x)
        worst = max(worst, abs(z @ A.T @ B @ z - qf.value(x)) / scale)
    checks.append(("bilinear decomposition identity", worst <= 1e-10,
                   f"worst relative error {worst:.2e}"))

    # First/second derivatives of the inverted output vs finite differences.
    cfg = _patient1_config()
    y, E0 = cfg.dataset.y, cfg.E0
    h1 = 1e-5
    worst1 = worst2 = 0.0
    for _ in range(min(trials, 100)):
        p = np.array([rng.uniform(1.5, 6.0), rng.uniform(75.0, 150.0)])
        dAg, dAe = wiener.gradient_design(cfg, p)
        for i, hset in ((0, (h1, 0.0)), (1, (0.0, h1))):
            dp = np.array(hset)
            fd = (wiener.build_design(cfg, p + dp) - wiener.build_design(cfg, p - dp)) / (2 * h1)
            got = (dAg, dAe)[i]
            worst1 = max(worst1, np.abs(got - fd).max() / max(np.abs(fd).max(), 1.0))
        d2g, d2c, d2e = wiener.second_partials(p, y, E0)

        def fval(q):
            return np.asarray(wiener.hill_inverse(q, y, E0))

        def fd_second(scale):
            # Steps proportional to each coordinate's scale, else roundoff
            # noise swamps the tiny d2/dEmax2 entries.
            hg, he = scale * 1e-3, scale * 1e-2
            f0 = fval(p)
            gg = (fval((p[0] + hg, p[1])) - 2 * f0 + fval((p[0] - hg, p[1]))) / hg**2
            ee = (fval((p[0], p[1] + he)) - 2 * f0 + fval((p[0], p[1] - he))) / he**2
            ge = (fval((p[0] + hg, p[1] + he)) - fval((p[0] + hg, p[1] - he))
                  - fval((p[0] - hg, p[1] + he)) + fval((p[0] - hg, p[1] - he))
                  ) / (4 * hg * he)
            return gg, ge, ee

        # Richardson extrapolation cancels the O(h^2) truncation term, which
        # otherwise dominates on samples where ln(a) is large.
        coarse, fine = fd_second(2.0), fd_second(1.0)
        refs = [(4 * f - c) / 3.0 for c, f in zip(coarse, fine)]
        for got, ref in zip((d2g, d2c, d2e), refs):
            worst2 = max(worst2, np.abs(got - ref).max() / max(np.abs(ref).max(), 1e-8))
    checks.append(("gradient vs central differences", worst1 <= 1e-6,
                   f"worst relative error {worst1:.2e}"))
    checks.append(("Hessian entries vs central differences", worst2 <= 1e-4,
                   f"worst relative error {worst2:.2e}"))

    # Taylor remainder soundness on random boxes.
    model = wiener.WienerModel(cfg)
    violations = 0
    for _ in range(20):
        c = np.array([rng.uniform(1.8, 5.5), rng.uniform(80.0, 140.0)])
        half = np.array([rng.uniform(0.02, 0.4), rng.uniform(0.5, 10.0)])
        box = Box(c - half, c + half)
        r_B = model.remainder_radius(box, c)
        A0 = model.design(c)
        dAg, dAe = model.design_gradient(c)
        for p in box.sample(rng, max(trials, 50)):
            dp = p - c
            O = model.design(p) - A0 - dAg * dp[0] - dAe * dp[1]
            if np.linalg.norm(O, 2) > r_B:
                violations += 1
    checks.append(("Taylor remainder radius soundness", violations == 0,
                   f"{violations} violations"))
    return checks


def suite_bounds(seed: int, trials: int, boxes: int = 50):
    """L(B) <= f(p) for sampled p, over random sub-boxes of the initial box."""
    rng = np.random.default_rng(seed)
    cfg = _patient1_config()
    model = wiener.WienerModel(cfg)
    b0, _ = wiener.adjust_box(
        cfg, Box(np.array([1.0, 40.0]), np.array([8.0, 160.0]))
    )
    violations = 0
    finite_bounds = 0
    for _ in range(boxes):
        lo = rng.uniform(b0.lower, b0.upper)
        hi = rng.uniform(lo, b0.upper)
        box = Box(lo, hi)
        rep = bound.lower_bound(model, box)
        if np.isfinite(rep.L):
            finite_bounds += 1
        for p in box.sample(rng, trials):
            _, f_p = bnb.solve_fixed_p(cfg, p)
            if f_p < rep.L - 1e-9 * (1.0 + abs(f_p)):
                violations += 1
    return [(
        "lower-bound soundness",
        violations == 0,
        f"{violations} violations over {boxes} boxes x {trials} samples "
        f"({finite_bounds} finite bounds)",
    )]


def suite_oracle(seed: int, grid: int = 200):
    """BnB against brute force on the synthetic affine problem."""
    problem = make_affine_problem(seed)
    box = Box(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    # The k-grid cap makes the bound at best (1 - 1/k_hi) f, so a relative
    # tolerance below 1/k_hi can never certify a nonzero optimum.
    solver = bnb.SolverConfig(epsilon=1e-5, epsilon_abs=1e-12, max_nodes=20000)
    res = bnb.branch_and_bound(problem, box, solver)
    p_grid, f_grid = grid_argmin(problem, box, grid)
    cell = box.lengths.max() / (grid - 1)
    dist = np.linalg.norm(res.p_star - p_grid)
    # The incumbent may sit up to epsilon above the optimum when certified.
    ok = (res.UB <= f_grid * (1.0 + 2 * solver.epsilon) + 1e-12
          and dist <= 2 * cell + 1e-9 and res.certificate)
    return [(
        "branch-and-bound vs brute-force grid",
        bool(ok),
        f"|p_bnb - p_grid| = {dist:.3e}, UB = {res.UB:.6e}, "
        f"grid min = {f_grid:.6e}, certificate = {res.certificate}",
    )]


SUITES = {"props": suite_props, "bounds": suite_bounds, "oracle": suite_oracle}


def run_suite(name: str, seed: int = 1, trials: int = 100, out=print) -> bool:
    if name == "props":
        checks = suite_props(seed, trials)
    elif name == "bounds":
        checks = suite_bounds(seed, min(trials, 500))
    elif name == "oracle":
        checks = suite_oracle(seed)
    else:
        raise ValueError(f"unknown suite {name!r} (choose from {sorted(SUITES)})")
    all_ok = True
    for label, ok, detail in checks:
        out(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
        all_ok &= ok
    return all_ok
