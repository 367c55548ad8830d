import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from globid.numerics import (
    cholesky_solve,
    cholesky_solve_batched,
    expm,
    least_squares,
    maximize_scalar,
)


def expm_series_oracle(M, terms=40):
    """High-order Taylor series with scaling, independent of scipy's core."""
    M = np.asarray(M, dtype=float)
    s = max(0, int(np.ceil(np.log2(max(np.linalg.norm(M, 1), 1e-300)))) + 1)
    A = M / 2**s
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, terms):
        term = term @ A / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


class TestLeastSquares:
    def test_identity(self):
        x = least_squares(np.eye(2), np.array([1.0, 2.0]))
        assert np.allclose(x, [1.0, 2.0])

    def test_mean_of_two_points(self):
        x = least_squares(np.array([[1.0], [1.0]]), np.array([0.0, 2.0]))
        assert np.allclose(x, [1.0])

    def test_matches_normal_equations(self):
        rng = np.random.default_rng(42)
        M = rng.standard_normal((20, 3))
        b = rng.standard_normal(20)
        x = least_squares(M, b)
        x_ne = np.linalg.solve(M.T @ M, M.T @ b)
        assert np.linalg.norm(x - x_ne) <= 1e-10 * np.linalg.norm(x_ne)

    def test_residual_orthogonality(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            m, n = rng.integers(3, 30), rng.integers(1, 4)
            M = rng.standard_normal((int(m), int(n)))
            b = rng.standard_normal(int(m))
            x = least_squares(M, b)
            g = M.T @ (M @ x - b)
            assert np.linalg.norm(g) <= 1e-9 * np.linalg.norm(M) * np.linalg.norm(b)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            least_squares(np.eye(3), np.ones(2))

    def test_underdetermined_rejected(self):
        with pytest.raises(ValueError):
            least_squares(np.ones((2, 3)), np.ones(2))


class TestCholeskySolve:
    def test_scaled_identity(self):
        x = cholesky_solve(2.0 * np.eye(2), np.array([2.0, 4.0]))
        assert np.allclose(x, [1.0, 2.0])

    def test_indefinite_returns_none(self):
        Q = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues 3, -1
        assert cholesky_solve(Q, np.array([1.0, 1.0])) is None

    def test_random_spd_residual(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            G = rng.standard_normal((6, 6))
            Q = G.T @ G + np.eye(6)
            rhs = rng.standard_normal(6)
            x = cholesky_solve(Q, rhs)
            assert x is not None
            assert np.linalg.norm(Q @ x - rhs) <= 1e-10 * np.linalg.norm(rhs)

    def test_never_solves_clearly_indefinite(self):
        # eigenvalue oracle: any matrix with an eigenvalue below
        # -tol*trace-scale must be rejected
        rng = np.random.default_rng(11)
        for _ in range(50):
            S = rng.standard_normal((5, 5))
            S = 0.5 * (S + S.T)
            lam = np.linalg.eigvalsh(S)
            x = cholesky_solve(S, rng.standard_normal(5))
            if lam.min() < -1e-12 * np.abs(np.trace(S)):
                assert x is None

    def test_batched_matches_scalar(self):
        rng = np.random.default_rng(5)
        Qs, rhss = [], []
        for _ in range(8):
            G = rng.standard_normal((4, 4))
            Qs.append(G.T @ G + 0.1 * np.eye(4))
            rhss.append(rng.standard_normal(4))
        xb, ok = cholesky_solve_batched(np.array(Qs), np.array(rhss))
        assert ok.all()
        for Q, rhs, x in zip(Qs, rhss, xb):
            assert np.allclose(x, cholesky_solve(Q, rhs))


class TestExpm:
    def test_zero(self):
        assert np.allclose(expm(np.zeros((3, 3))), np.eye(3))

    def test_diagonal(self):
        out = expm(np.diag([1.0, -1.0]))
        assert np.allclose(out, np.diag([np.e, 1.0 / np.e]))

    def test_nilpotent(self):
        out = expm(np.array([[0.0, 1.0], [0.0, 0.0]]))
        assert np.allclose(out, [[1.0, 1.0], [0.0, 1.0]])

    def test_against_series_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            M = rng.standard_normal((5, 5))
            M *= 10.0 / np.linalg.norm(M)
            E = expm(M)
            E_ref = expm_series_oracle(M)
            assert np.linalg.norm(E - E_ref) <= 1e-12 * np.linalg.norm(E_ref)

    def test_inverse_property(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            M = rng.standard_normal((4, 4))
            M *= 5.0 / np.linalg.norm(M)
            assert np.linalg.norm(expm(M) @ expm(-M) - np.eye(4)) <= 1e-10

    def test_size_guard(self):
        with pytest.raises(ValueError):
            expm(np.zeros((17, 17)))


class TestMaximizeScalar:
    def test_symmetric_peak(self):
        x, v = maximize_scalar(lambda k: -np.log(k) ** 2, 1e-6, 1e6)
        assert abs(x - 1.0) <= 0.01

    def test_monotone_hits_endpoint(self):
        x, v = maximize_scalar(lambda k: k, 1.0, 2.0)
        assert v == pytest.approx(2.0)

    def test_calculus_oracle(self):
        x, v = maximize_scalar(lambda k: (1.0 - 1.0 / k) * 5.0 - k * 0.01)
        assert abs(x - np.sqrt(5.0 / 0.01)) / np.sqrt(5.0 / 0.01) <= 0.02

    def test_all_minus_inf(self):
        x, v = maximize_scalar(lambda k: -np.inf, 1e-6, 1e6)
        assert x == 1e-6 and v == -np.inf

    def test_vectorized_agrees(self):
        # the two refinement strategies differ, so only coarse agreement
        f = lambda k: -((np.log(np.asarray(k)) - 2.0) ** 2)
        x1, v1 = maximize_scalar(lambda k: float(f(k)), 1e-3, 1e3)
        x2, v2 = maximize_scalar(f, 1e-3, 1e3, vectorized=True)
        assert x1 == pytest.approx(x2, rel=0.05)
        assert v1 == pytest.approx(v2, abs=1e-3)

    @given(st.floats(min_value=-3.0, max_value=3.0))
    @settings(max_examples=25, deadline=None)
    def test_quadratic_in_log_space(self, mu):
        peak = 10.0**mu
        f = lambda k: -((np.log10(k) - mu) ** 2)
        x, v = maximize_scalar(f, 1e-6, 1e6)
        assert abs(np.log10(x) - mu) <= 0.05
