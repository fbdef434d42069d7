"""Periodic heat kernel K_eps on T^d, its cost c_eps = -eps log K_eps, and
exact spectral heat convolution.

    K_eps(x) = (2 pi eps)^(-d/2) sum_{k in Z^d} exp(-|x - 2 pi k|^2 / (2 eps))

The kernel factorizes over axes, so everything is built from the 1D log-kernel.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import ceil, log, pi, sqrt

import numpy as np
from scipy.special import logsumexp

from .grid import TWO_PI, PeriodicGrid


def default_kmax(eps: float) -> int:
    """Smallest k with pi^2 k^2 / eps >= 40 ln 10 (at least one image each side)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return max(1, int(ceil(sqrt(40.0 * log(10.0) * eps) / pi)))


def _wrap(x):
    """Map displacements to [-pi, pi)."""
    return np.mod(np.asarray(x, dtype=float) + pi, TWO_PI) - pi


def log_kernel_1d(x, eps: float, k_max: int | None = None) -> np.ndarray:
    """log of the 1D periodic heat kernel at displacements ``x`` (any shape)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    k_max = default_kmax(eps) if k_max is None else int(k_max)
    xw = _wrap(x)
    ks = np.arange(-k_max, k_max + 1)
    expo = -((xw[..., None] - TWO_PI * ks) ** 2) / (2.0 * eps)
    return logsumexp(expo, axis=-1) - 0.5 * np.log(2.0 * pi * eps)


def log_kernel_row(n: int, eps: float, k_max: int | None = None) -> np.ndarray:
    """log K_eps(j * 2pi/n) for j = 0..n-1 (1D, circulant generator)."""
    return log_kernel_1d(np.arange(n) * (TWO_PI / n), eps, k_max)


def torus_distance(x, y) -> np.ndarray | float:
    """Geodesic distance on T^d; the last axis holds coordinates when d > 1."""
    d = np.abs(_wrap(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))
    if d.ndim == 0:
        return float(d)
    return np.sqrt(np.sum(d**2, axis=-1))


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    return x


def cost(x, y, eps: float, dim: int = 1, k_max: int | None = None):
    """c_eps(x, y) = -eps * log K_eps(x - y); ``x``, ``y`` broadcast as points."""
    diff = _as_points(x, dim) - _as_points(y, dim)
    c = -eps * np.sum(log_kernel_1d(diff, eps, k_max), axis=-1)
    return float(c) if np.ndim(c) == 0 else c


@dataclass(frozen=True)
class HeatKernel:
    eps: float
    grid: PeriodicGrid
    values: np.ndarray
    log_values: np.ndarray
    spatial_truncation: int


def kernel_values(grid: PeriodicGrid, eps: float, k_max: int | None = None) -> HeatKernel:
    """Materialize K_eps(x) at the grid nodes (separable product of 1D rows)."""
    k_max = default_kmax(eps) if k_max is None else int(k_max)
    row = log_kernel_row(grid.n, eps, k_max)
    if grid.dim == 1:
        logk = row
    else:
        logk = row[:, None] + row[None, :]
    return HeatKernel(eps, grid, np.exp(logk), logk, k_max)


def kernel_bounds(grid: PeriodicGrid, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Two-sided Gaussian envelope of K_eps valid for eps < pi^2/2.

    lower = (2 pi eps)^(-d/2) exp(-dist^2 / (2 eps)),  upper = 2^(d+1) e^(5d) * lower.
    """
    d = grid.dim
    dist2 = sum(_wrap(x) ** 2 for x in grid.nodes)
    lower = (2.0 * pi * eps) ** (-d / 2.0) * np.exp(-dist2 / (2.0 * eps))
    return lower, 2.0 ** (d + 1) * np.exp(5.0 * d) * lower


def cost_oscillation(grid: PeriodicGrid, eps: float) -> float:
    """osc(c_eps) = eps * (max log K - min log K) over the grid."""
    logk = kernel_values(grid, eps).log_values
    return float(eps * (logk.max() - logk.min()))


def heat_multiplier(grid: PeriodicGrid, eps: float) -> np.ndarray:
    return np.exp(-0.5 * eps * grid._rk2)


def heat_convolve(grid: PeriodicGrid, values: np.ndarray, eps: float) -> np.ndarray:
    """(K_eps * f)(x) = int K_eps(x - y) f(y) dy via the multiplier exp(-eps|z|^2/2)."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    if eps == 0:
        return np.array(values, dtype=float, copy=True)
    return grid.apply_multiplier(values, heat_multiplier(grid, eps))
