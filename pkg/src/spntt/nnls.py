"""Dense non-negative least squares via the Lawson-Hanson active set method.

Solves min ||A x - y||_2 subject to x >= 0. Inner least-squares solves work on
the Gram matrix (the subproblems here have many more rows than columns, so
forming A^T A once and refactoring small passive blocks is far cheaper than
re-factoring A); exactly dependent passive columns fall back to the
minimum-norm solution of the original system. Entries in the active set are
held at exactly zero. An optional warm-start passive set (e.g. the support of
the previous sweep's solution in an alternating scheme) skips most of the
index-by-index support growth; KKT conditions are re-verified regardless.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NnlsProblem:
    A: np.ndarray
    y: np.ndarray
    tol: float | None = None
    max_outer_iters: int | None = None


@dataclass(frozen=True)
class NnlsResult:
    x: np.ndarray
    residual_norm: float
    converged: bool
    outer_iterations: int
    passive: np.ndarray  # bool mask of the final support


def default_tolerance(A: np.ndarray) -> float:
    n, m = A.shape
    row_norm = float(np.abs(A).sum(axis=1).max()) if A.size else 0.0
    return 10.0 * np.finfo(np.float64).eps * row_norm * max(n, m)


def nnls(A: np.ndarray, y: np.ndarray, tol: float | None = None,
         max_outer: int | None = None,
         warm_passive: np.ndarray | None = None) -> NnlsResult:
    A = np.asarray(A, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"A must be a matrix, got shape {A.shape}")
    n, m = A.shape
    if y.shape != (n,):
        raise ValueError(f"y must have shape ({n},), got {y.shape}")
    if not (np.isfinite(A).all() and np.isfinite(y).all()):
        raise ValueError("non-finite entries in NNLS input")
    if tol is None:
        tol = default_tolerance(A)
    if max_outer is None:
        max_outer = 10 * m + 10
    max_inner = 3 * m

    gram = A.T @ A
    rhs = A.T @ y

    def solve_passive(idx: np.ndarray) -> np.ndarray:
        sub = gram[np.ix_(idx, idx)]
        try:
            return np.linalg.solve(sub, rhs[idx])
        except np.linalg.LinAlgError:
            z, *_ = np.linalg.lstsq(A[:, idx], y, rcond=None)
            return z

    x = np.zeros(m)
    passive = np.zeros(m, dtype=bool)

    if warm_passive is not None:
        passive = np.asarray(warm_passive, dtype=bool).copy()
        if passive.shape != (m,):
            raise ValueError(f"warm_passive must have shape ({m},)")
        # Shrink the warm support until its unconstrained solution is feasible.
        while passive.any():
            idx = np.flatnonzero(passive)
            z = solve_passive(idx)
            bad = z <= 0
            if not bad.any():
                x[idx] = z
                break
            passive[idx[bad]] = False

    converged = False
    outer = 0
    while True:
        grad = gram @ x - rhs
        candidates = ~passive & (grad < -tol)
        if not candidates.any():
            converged = True
            break
        if outer >= max_outer:
            break
        outer += 1
        entering = int(np.argmin(np.where(candidates, grad, np.inf)))
        passive[entering] = True

        inner = 0
        while True:
            idx = np.flatnonzero(passive)
            z = solve_passive(idx)
            if (z > 0).all():
                x = np.zeros(m)
                x[idx] = z
                break
            inner += 1
            if inner > max_inner:
                break
            x_idx = x[idx]
            shrink = z <= 0
            denom = x_idx - z
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(denom > 0, x_idx / denom, 0.0)
            alpha = float(ratios[shrink].min())
            x_idx = x_idx + alpha * (z - x_idx)
            # Entries that defined the step leave the support at exactly zero.
            leaving = shrink & (ratios <= alpha)
            x_idx[leaving] = 0.0
            x_idx[x_idx < 0] = 0.0
            x = np.zeros(m)
            x[idx] = x_idx
            passive[idx[x_idx == 0]] = False
            if not passive.any():
                break
        if inner > max_inner:
            break

    residual = float(np.linalg.norm(A @ x - y))
    return NnlsResult(x=x, residual_norm=residual, converged=converged,
                      outer_iterations=outer, passive=x > 0)


def nnls_solve(problem: NnlsProblem,
               warm_passive: np.ndarray | None = None) -> NnlsResult:
    return nnls(problem.A, problem.y, tol=problem.tol,
                max_outer=problem.max_outer_iters, warm_passive=warm_passive)
