"""Periodic divergence-form problems  div(rho grad u) = f  with zero-mean u."""
from __future__ import annotations

import numpy as np

from .grid import PeriodicGrid

SOLVABILITY_TOL = 1e-10


class EllipticError(RuntimeError):
    pass


def apply_divform(grid: PeriodicGrid, rho: np.ndarray, u: np.ndarray) -> np.ndarray:
    """div(rho grad u), spectrally."""
    return grid.divergence([rho * g for g in grid.gradient(u)])


def _check_inputs(grid: PeriodicGrid, rho, f, solvability_tol):
    rho = np.asarray(rho, dtype=float)
    f = np.asarray(f, dtype=float)
    grid._check_shape(rho)
    grid._check_shape(f)
    if not np.all(rho > 0):
        raise ValueError("rho must be strictly positive on the grid")
    mass = grid.quadrature(f)
    if abs(mass) > solvability_tol:
        raise ValueError(f"solvability violated: integral of f is {mass:.3e}")
    return rho, f - mass / (2.0 * np.pi) ** grid.dim


def _solve_1d(grid: PeriodicGrid, rho, f):
    # rho u' = F + C with F' = f; C makes u' integrate to zero.
    F = grid.antiderivative(f)
    inv = 1.0 / rho
    C = -grid.quadrature(F * inv) / grid.quadrature(inv)
    return grid.antiderivative((F + C) * inv)


def _solve_pcg(grid: PeriodicGrid, rho, f, tol, max_iter):
    # SPD operator A u = -div(rho grad u) on zero-mean fields,
    # preconditioned by (-mean(rho) Delta)^-1.
    scale = float(np.mean(rho))
    fnorm = np.sqrt(grid.quadrature(f**2))
    if fnorm == 0.0:
        return np.zeros(grid.shape)

    def A(u):
        return -apply_divform(grid, rho, u)

    def M(r):
        return -grid.inverse_laplacian(r) / scale

    b = -f
    u = M(b)
    r = b - A(u)
    z = M(r)
    p = z.copy()
    rz = np.sum(r * z)
    for it in range(max_iter):
        if np.sqrt(grid.quadrature(r**2)) <= tol * fnorm:
            return u - np.mean(u)
        Ap = A(p)
        alpha = rz / np.sum(p * Ap)
        u = u + alpha * p
        r = r - alpha * Ap
        z = M(r)
        rz_new = np.sum(r * z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = np.sqrt(grid.quadrature(r**2)) / fnorm
    raise EllipticError(f"CG did not converge in {max_iter} iterations (relative residual {res:.2e})")


def solve_divform(
    grid: PeriodicGrid,
    rho: np.ndarray,
    f: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 500,
    solvability_tol: float = SOLVABILITY_TOL,
) -> np.ndarray:
    """Zero-mean u with div(rho grad u) = f.

    d=1 is solved directly by two quadratures; d=2 by preconditioned CG.
    ``f`` must integrate to zero up to ``solvability_tol``; the residual mean
    is projected out before solving.
    """
    rho, f = _check_inputs(grid, rho, f, solvability_tol)
    if grid.dim == 1:
        u = _solve_1d(grid, rho, f)
    else:
        u = _solve_pcg(grid, rho, f, tol, max_iter)
    return u - np.mean(u)


def residual(grid: PeriodicGrid, rho, u, f) -> float:
    """Relative L2 residual ||div(rho grad u) - f|| / ||f||."""
    r = apply_divform(grid, rho, u) - f
    fn = np.sqrt(grid.quadrature(f**2))
    rn = np.sqrt(grid.quadrature(r**2))
    return float(rn / fn) if fn > 0 else float(rn)
