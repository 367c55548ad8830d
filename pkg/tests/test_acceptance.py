"""End-to-end acceptance criteria.

Each test prints one summary line (to the real stdout, so it survives pytest
capture) of the form::

    ACCEPTANCE nn [PASS|FAIL] detail

Criteria 1-2 share one expensive fixture: a full branch-and-bound
identification for every bundled patient at both ARX orders, with default
solver settings.  Everything else runs in seconds.
"""

from __future__ import annotations

import sys
import time

import numpy as np
import pytest

from globid import bnb, bound, pkpd, verify, wiener
from globid.bnb import SolverConfig, branch_and_bound, identify, landscape, solve_fixed_p
from globid.wiener import Box, ProblemConfig

RUNTIME_BUDGET_S = 600.0  # per patient per order
B0_LOWER = np.array([1.0, 40.0])
B0_UPPER = np.array([8.0, 160.0])


def _b0() -> Box:
    return Box(B0_LOWER.copy(), B0_UPPER.copy())


def _report(num: int, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {num:>2} [{'PASS' if ok else 'FAIL'}] {detail}"
    print(line, file=sys.__stdout__, flush=True)
    assert ok, line


def _dataset(pat):
    return pkpd.synthesize_dataset(pat, pkpd.BOLUS_INPUT, 1.0, 300.0)


@pytest.fixture(scope="module")
def recovery_runs():
    """identify() for all 13 patients x N in {2, 3}, default solver."""
    runs = {}
    for pat in pkpd.load_patient_table():
        ds = _dataset(pat)
        truth = np.array([pat.hill.gamma, pat.hill.emax])
        for N in (2, 3):
            cfg = ProblemConfig(dataset=ds, N=N, M=N)
            t0 = time.time()
            res, _, _ = identify(cfg, _b0(), SolverConfig())
            runs[(pat.id, N)] = (res, time.time() - t0, truth)
    return runs


@pytest.mark.slow
def test_criterion_01_parameter_recovery(recovery_runs):
    errs = {k: float(np.linalg.norm(res.p_star - truth))
            for k, (res, _, truth) in recovery_runs.items()}
    times = {k: t for k, (_, t, _) in recovery_runs.items()}
    worst_key = max(errs, key=errs.get)
    tight_n3 = sum(1 for (pid, N), e in errs.items() if N == 3 and e <= 0.05)
    ok = (max(errs.values()) <= 0.5
          and tight_n3 >= 8
          and max(times.values()) <= RUNTIME_BUDGET_S)
    _report(1, ok,
            f"worst error {errs[worst_key]:.3g} (patient {worst_key[0]}, "
            f"N={worst_key[1]}), {tight_n3}/13 within 0.05 at N=3, "
            f"slowest run {max(times.values()):.0f}s")


@pytest.mark.slow
def test_criterion_02_objective_magnitude(recovery_runs):
    f2 = {pid: res.UB for (pid, N), (res, _, _) in recovery_runs.items() if N == 2}
    n_tight = sum(1 for v in f2.values() if v <= 1e-5)
    ok = max(f2.values()) <= 1e-3 and n_tight >= 10
    _report(2, ok,
            f"max f2 {max(f2.values()):.3g}, {n_tight}/13 below 1e-5")


def test_criterion_03_exact_arx_oracle():
    worst = 0.0
    for pat in pkpd.load_patient_table():
        cfg = ProblemConfig(dataset=_dataset(pat), N=4, M=4)
        p = np.array([pat.hill.gamma, pat.hill.emax])
        _, f = solve_fixed_p(cfg, p)
        scale = float(np.sum(wiener.hill_inverse(p, cfg.dataset.y, cfg.E0) ** 2))
        worst = max(worst, f / max(scale, 1e-300))
    _report(3, worst <= 1e-12,
            f"worst relative fixed-p residual at true p, N=M=4: {worst:.3g}")


def test_criterion_04_bound_soundness():
    rng = np.random.default_rng(20240817)
    cfg = ProblemConfig(dataset=_dataset(pkpd.load_patient_table()[0]), N=2, M=2)
    model = wiener.WienerModel(cfg)
    b0, _ = wiener.adjust_box(cfg, _b0())
    violations = 0
    for _ in range(50):
        lo = rng.uniform(b0.lower, b0.upper)
        hi = rng.uniform(lo, b0.upper)
        box = Box(lo, hi)
        rep = bound.lower_bound(model, box)
        for p in box.sample(rng, 500):
            _, f_p = solve_fixed_p(cfg, p)
            if f_p < rep.L - 1e-9 * (1.0 + abs(f_p)):
                violations += 1
    _report(4, violations == 0,
            f"{violations} violations over 50 boxes x 500 samples")


def test_criterion_05_bound_convergence():
    pat = pkpd.load_patient_table()[0]
    cfg = ProblemConfig(dataset=_dataset(pat), N=2, M=2)
    model = wiener.WienerModel(cfg)
    p = np.array([pat.hill.gamma, pat.hill.emax])
    _, f = solve_fixed_p(cfg, p)
    scale = B0_UPPER - B0_LOWER
    gaps = []
    for d in (1e-1, 1e-2, 1e-3, 1e-4):
        half = 0.5 * d * scale / np.sqrt(2.0)
        rep = bound.lower_bound(model, Box(p - half, p + half))
        gaps.append(abs(rep.L - f))
    decreasing = all(b <= a for a, b in zip(gaps, gaps[1:]))
    final_ok = gaps[-1] <= 1e-4 * (1.0 + f)
    _report(5, decreasing and final_ok,
            "gaps " + " -> ".join(f"{g:.2e}" for g in gaps)
            + f", final tolerance {1e-4 * (1.0 + f):.2e}")


def test_criterion_06_shift_matrix_property():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(1000):
        m, n = int(rng.integers(2, 8)), int(rng.integers(1, 5))
        M = rng.standard_normal((m, n))
        N = rng.standard_normal((m, n))
        k = 10.0 ** rng.uniform(-4, 4)
        S = M.T @ N + N.T @ M + (1.0 / k) * N.T @ N + k * M.T @ M
        scale = abs(np.trace((1.0 / k) * N.T @ N + k * M.T @ M)) + 1e-300
        worst = min(worst, np.linalg.eigvalsh(0.5 * (S + S.T)).min() / scale)
    _report(6, worst >= -1e-10, f"worst normalized eigenvalue {worst:.3g}")


def test_criterion_07_bilinear_identity():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        m, n = int(rng.integers(2, 8)), int(rng.integers(1, 5))
        A = rng.standard_normal((m, n + 1))
        B = rng.standard_normal((m, n + 1))
        x = rng.standard_normal(n)
        z = np.concatenate([[1.0], x])
        qf = bound.bilinear_decompose(A, B)
        scale = np.linalg.norm(A) * np.linalg.norm(B) * (1.0 + x @ x)
        worst = max(worst, abs(z @ A.T @ B @ z - qf.value(x)) / scale)
    inst = bound.bilinear_decompose(
        np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[1.0, 2.0], [3.0, 4.0]])
    )
    inst_ok = (np.allclose(inst.Q, [[20.0]]) and np.allclose(inst.c, [28.0])
               and inst.d == pytest.approx(10.0))
    _report(7, worst <= 1e-10 and inst_ok,
            f"worst relative identity error {worst:.3g}, "
            f"fixed instance (Q,c,d)=({float(inst.Q[0, 0]):g},"
            f"{float(inst.c[0]):g},{inst.d:g})")


def test_criterion_08_remainder_soundness_and_scaling():
    rng = np.random.default_rng(8)
    cfg = ProblemConfig(dataset=_dataset(pkpd.load_patient_table()[0]), N=2, M=2)
    model = wiener.WienerModel(cfg)
    violations = 0
    for _ in range(20):
        c = np.array([rng.uniform(1.8, 5.5), rng.uniform(80.0, 140.0)])
        half = np.array([rng.uniform(0.02, 0.4), rng.uniform(0.5, 10.0)])
        box = Box(c - half, c + half)
        r_B = model.remainder_radius(box, c)
        A0 = model.design(c)
        dAg, dAe = model.design_gradient(c)
        for p in box.sample(rng, 1000):
            dp = p - c
            O = model.design(p) - A0 - dAg * dp[0] - dAe * dp[1]
            if np.linalg.norm(O, 2) > r_B:
                violations += 1
    # quadratic scaling: r_B / sigma(B)^2 stabilizes as the box shrinks
    scale = B0_UPPER - B0_LOWER
    c = np.array([2.5, 100.0])
    ratios = []
    for s in (1.0 / 320.0, 1.0 / 640.0):
        hw = 0.5 * s * scale
        sigma = float(np.linalg.norm(2.0 * hw / scale))
        ratios.append(model.remainder_radius(Box(c - hw, c + hw), c) / sigma**2)
    drift = abs(ratios[1] - ratios[0]) / ratios[1]
    _report(8, violations == 0 and drift <= 0.05,
            f"{violations} violations over 20 boxes x 1000 samples, "
            f"ratio drift {drift:.2%} across box scales")


def test_criterion_09_grid_oracle_equivalence():
    problem = verify.make_affine_problem(seed=9)
    box = Box(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    solver = SolverConfig(epsilon=0.0, epsilon_abs=0.0, max_nodes=10000)
    res = branch_and_bound(problem, box, solver)
    p_grid, f_grid = verify.grid_argmin(problem, box, grid=200)
    cell = float(box.lengths.max()) / 199.0
    dist = float(np.linalg.norm(res.p_star - p_grid))
    # zero tolerances can never certify, but the optimum is never pruned:
    # the incumbent must be at least as good as the exhaustive grid and sit
    # within one final box (well under two grid cells here) of its argmin
    ok = res.UB <= f_grid + 1e-12 and dist <= 2.0 * cell
    _report(9, ok,
            f"|p_bnb - p_grid| = {dist:.3g} (cell {cell:.3g}), "
            f"UB - grid min = {res.UB - f_grid:.3g}")


def test_criterion_10_landscape_reproduction():
    pat = pkpd.load_patient_table()[0]
    cfg = ProblemConfig(dataset=_dataset(pat), N=2, M=2)
    box, _ = wiener.adjust_box(cfg, _b0())
    gammas, emaxes, H = landscape(cfg, box, 50, 50)
    i, j = np.unravel_index(np.nanargmin(H), H.shape)
    ti = int(np.argmin(np.abs(gammas - pat.hill.gamma)))
    tj = int(np.argmin(np.abs(emaxes - pat.hill.emax)))
    dist = max(abs(i - ti), abs(j - tj))
    _report(10, dist <= 1,
            f"argmin cell ({i},{j}) vs truth cell ({ti},{tj}), "
            f"Chebyshev distance {dist}")


def test_criterion_11_derivative_checks():
    rng = np.random.default_rng(11)
    pat = pkpd.load_patient_table()[0]
    cfg = ProblemConfig(dataset=_dataset(pat), N=2, M=2)
    y, E0 = cfg.dataset.y, cfg.E0

    def fval(q):
        return np.asarray(wiener.hill_inverse(q, y, E0))

    worst1 = worst2 = 0.0
    for _ in range(100):
        p = np.array([rng.uniform(1.5, 6.0), rng.uniform(75.0, 150.0)])
        _, _, dg, de = wiener._partials(p, y, E0)
        h1 = 1e-5
        fd_g = (fval((p[0] + h1, p[1])) - fval((p[0] - h1, p[1]))) / (2 * h1)
        fd_e = (fval((p[0], p[1] + h1)) - fval((p[0], p[1] - h1))) / (2 * h1)
        for got, ref in ((dg, fd_g), (de, fd_e)):
            worst1 = max(worst1, np.abs(got - ref).max() / max(np.abs(ref).max(), 1.0))

        d2g, d2c, d2e = wiener.second_partials(p, y, E0)

        def fd_second(scale):
            # coordinate-scaled steps; emax lives on a ~17x larger scale
            hg, he = scale * 1e-3, scale * 1e-2
            f0 = fval(p)
            gg = (fval((p[0] + hg, p[1])) - 2 * f0 + fval((p[0] - hg, p[1]))) / hg**2
            ee = (fval((p[0], p[1] + he)) - 2 * f0 + fval((p[0], p[1] - he))) / he**2
            ge = (fval((p[0] + hg, p[1] + he)) - fval((p[0] + hg, p[1] - he))
                  - fval((p[0] - hg, p[1] + he)) + fval((p[0] - hg, p[1] - he))
                  ) / (4 * hg * he)
            return gg, ge, ee

        coarse, fine = fd_second(2.0), fd_second(1.0)
        refs = [(4 * f - c) / 3.0 for c, f in zip(coarse, fine)]
        for got, ref in zip((d2g, d2c, d2e), refs):
            worst2 = max(worst2, np.abs(got - ref).max() / max(np.abs(ref).max(), 1e-8))
    _report(11, worst1 <= 1e-6 and worst2 <= 1e-4,
            f"worst first-derivative error {worst1:.3g}, "
            f"worst second-derivative error {worst2:.3g}")
