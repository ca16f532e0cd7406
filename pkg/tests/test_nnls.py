import itertools

import numpy as np
import pytest

from spntt import NnlsProblem, nnls_solve
from spntt.nnls import default_tolerance, nnls


def exhaustive_nnls(A: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Oracle: try every support, keep the feasible least-squares minimum."""
    m = A.shape[1]
    best_x = np.zeros(m)
    best_res = float(np.linalg.norm(y))
    for size in range(1, m + 1):
        for support in itertools.combinations(range(m), size):
            idx = list(support)
            z, *_ = np.linalg.lstsq(A[:, idx], y, rcond=None)
            if (z < 0).any():
                continue
            x = np.zeros(m)
            x[idx] = z
            res = float(np.linalg.norm(A @ x - y))
            if res < best_res - 1e-12:
                best_res = res
                best_x = x
    return best_x, best_res


def kkt_satisfied(A, y, x, tol) -> bool:
    g = A.T @ (A @ x - y)
    if (x < 0).any():
        return False
    if x.any() and np.abs(g[x > 0]).max() > tol:
        return False
    return bool((g[x == 0] >= -tol).all())


class TestSpecExamples:
    def test_coordinate_projection(self):
        res = nnls(np.eye(2), np.array([3.0, -2.0]))
        np.testing.assert_allclose(res.x, [3.0, 0.0])
        assert res.x[1] == 0.0  # exact zero, no epsilon residue

    def test_unconstrained_optimum_feasible(self):
        res = nnls(np.array([[1.0], [1.0]]), np.array([1.0, 2.0]))
        np.testing.assert_allclose(res.x, [1.5])
        assert res.residual_norm == pytest.approx(np.sqrt(0.5))

    def test_gradient_nonnegative_at_origin(self):
        res = nnls(np.array([[1.0, 2.0], [2.0, 1.0]]), np.array([-1.0, -1.0]))
        np.testing.assert_array_equal(res.x, [0.0, 0.0])


class TestKkt:
    @pytest.mark.parametrize("seed", range(40))
    def test_random_problems(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 31))
        m = int(rng.integers(1, 31))
        A = rng.normal(size=(n, m))
        y = rng.normal(size=n)
        res = nnls(A, y)
        assert res.converged
        tol = max(10 * default_tolerance(A), 1e-9)
        assert kkt_satisfied(A, y, res.x, tol)
        assert res.residual_norm == pytest.approx(np.linalg.norm(A @ res.x - y))

    def test_zero_rhs(self):
        res = nnls(np.ones((3, 2)), np.zeros(3))
        np.testing.assert_array_equal(res.x, [0.0, 0.0])

    def test_matches_unconstrained_when_feasible(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            m = int(rng.integers(1, 8))
            A = rng.normal(size=(m + 5, m))
            x_true = rng.uniform(0.5, 2.0, size=m)
            y = A @ x_true + 1e-3 * rng.normal(size=m + 5)
            unconstrained, *_ = np.linalg.lstsq(A, y, rcond=None)
            if (unconstrained <= 0).any():
                continue
            res = nnls(A, y)
            np.testing.assert_allclose(res.x, unconstrained, rtol=1e-10)


class TestExhaustiveOracle:
    @pytest.mark.parametrize("seed", range(25))
    def test_matches_support_enumeration(self, seed):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(2, 15))
        m = int(rng.integers(1, 9))
        A = rng.normal(size=(n, m))
        y = rng.normal(size=n)
        res = nnls(A, y)
        _, best_res = exhaustive_nnls(A, y)
        assert res.residual_norm == pytest.approx(best_res, abs=1e-8)


class TestWarmStart:
    @pytest.mark.parametrize("seed", range(15))
    def test_same_solution_as_cold_start(self, seed):
        rng = np.random.default_rng(2000 + seed)
        A = rng.normal(size=(25, 10))
        y = rng.normal(size=25)
        cold = nnls(A, y)
        wrong = np.zeros(10, dtype=bool)
        wrong[:5] = True
        warm = nnls(A, y, warm_passive=wrong)
        assert warm.residual_norm == pytest.approx(cold.residual_norm, abs=1e-10)
        np.testing.assert_allclose(warm.x, cold.x, atol=1e-8)

    def test_exact_support_short_circuits(self):
        rng = np.random.default_rng(5)
        A = rng.normal(size=(30, 8))
        y = rng.normal(size=30)
        cold = nnls(A, y)
        warm = nnls(A, y, warm_passive=cold.passive)
        assert warm.outer_iterations <= cold.outer_iterations
        np.testing.assert_allclose(warm.x, cold.x, atol=1e-12)


class TestDegenerate:
    def test_duplicate_columns(self):
        rng = np.random.default_rng(3)
        col = rng.normal(size=12)
        A = np.stack([col, col, rng.normal(size=12)], axis=1)
        y = rng.normal(size=12)
        res = nnls(A, y)
        assert (res.x >= 0).all()
        tol = max(10 * default_tolerance(A), 1e-8)
        assert kkt_satisfied(A, y, res.x, tol)

    def test_wide_problem(self):
        rng = np.random.default_rng(4)
        A = rng.normal(size=(3, 12))
        y = rng.normal(size=3)
        res = nnls(A, y)
        assert res.converged and (res.x >= 0).all()

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            nnls(np.array([[np.nan]]), np.array([1.0]))
        with pytest.raises(ValueError, match="non-finite"):
            nnls(np.array([[1.0]]), np.array([np.inf]))

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            nnls(np.ones(3), np.ones(3))
        with pytest.raises(ValueError):
            nnls(np.ones((3, 2)), np.ones(4))


def test_problem_wrapper():
    problem = NnlsProblem(A=np.eye(3), y=np.array([1.0, -1.0, 2.0]))
    res = nnls_solve(problem)
    np.testing.assert_allclose(res.x, [1.0, 0.0, 2.0])
