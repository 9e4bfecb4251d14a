"""Linear solves for the implicit nutrient update."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .grid import Grid
from .model import apply_v_operator, v_operator_diagonal


class SolveError(RuntimeError):
    pass


@dataclass
class SolveInfo:
    iterations: int
    residual: float  # relative 2-norm residual


def _dot(a: np.ndarray, b: np.ndarray) -> float:
    # numpy's pairwise sum; BLAS dot may split work across threads
    return float(np.sum(a * b))


def pcg(apply, b: np.ndarray, diag: np.ndarray, tol: float, maxiter: int, x0=None):
    """Jacobi-preconditioned conjugate gradients for an SPD operator.

    Stops when ``||b - A x|| <= tol * ||b||``.  Returns ``(x, SolveInfo)``.
    """
    scale = float(np.max(np.abs(b)))
    if scale == 0.0:
        return np.zeros_like(b), SolveInfo(0, 0.0)
    if scale != 1.0:
        # a nutrient decayed to ~1e-300 would underflow the inner products
        x, info = pcg(apply, b / scale, diag, tol, maxiter, None if x0 is None else x0 / scale)
        return x * scale, info
    bnorm = np.sqrt(_dot(b, b))
    x = b / diag if x0 is None else x0.copy()
    r = b - apply(x)
    rnorm = np.sqrt(_dot(r, r))
    if rnorm <= tol * bnorm:
        return x, SolveInfo(0, rnorm / bnorm)
    z = r / diag
    p = z.copy()
    rz = _dot(r, z)
    for it in range(1, maxiter + 1):
        Ap = apply(p)
        step = rz / _dot(p, Ap)
        x += step * p
        r -= step * Ap
        rnorm = np.sqrt(_dot(r, r))
        if rnorm <= tol * bnorm:
            # recompute the true residual once so the report is honest
            rtrue = b - apply(x)
            res = np.sqrt(_dot(rtrue, rtrue)) / bnorm
            if res <= tol:
                return x, SolveInfo(it, res)
            r = rtrue
        z = r / diag
        rz_new = _dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolveError(f"PCG did not reach tol={tol} in {maxiter} iterations (residual {rnorm / bnorm:.3e})")


def tridiagonal_v_solve(grid: Grid, u: np.ndarray, dt: float, b: np.ndarray):
    """Direct banded solve of the 1D nutrient system."""
    (n,), (h,) = grid.cells, grid.spacing
    c = dt / h**2
    ab = np.zeros((3, n))
    ab[0, 1:] = -c
    ab[2, :-1] = -c
    ab[1] = v_operator_diagonal(grid, u, dt)
    x = solve_banded((1, 1), ab, b, check_finite=False)
    r = b - apply_v_operator(grid, u, dt, x)
    bnorm = np.sqrt(_dot(b, b))
    res = np.sqrt(_dot(r, r)) / bnorm if bnorm > 0 else 0.0
    return x, SolveInfo(1, res)


def solve_v(grid: Grid, u: np.ndarray, v: np.ndarray, dt: float, tol: float = 1e-12, maxiter: int = 1000):
    """Solve ``(I - dt lap + dt diag(u)) x = v``; 1D uses a banded direct solve."""
    if grid.dim == 1:
        return tridiagonal_v_solve(grid, u, dt, v)
    diag = v_operator_diagonal(grid, u, dt)
    return pcg(lambda x: apply_v_operator(grid, u, dt, x), v, diag, tol, maxiter, x0=v)
