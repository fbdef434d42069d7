"""Entropic optimal transport on T^d with cost c_eps = -eps log K_eps.

Conventions: phi lives on mu's side, psi on nu's side, and

    T_mu[phi](y) = -eps log int K_eps(x - y) exp(phi(x)/eps) mu(x) dx,
    phi = T_nu[psi],  psi = T_mu[phi]           (Schroedinger system)
    d pi / d(mu x nu) = exp((phi(x) + psi(y) - c_eps(x, y)) / eps).

Potentials are gauged so that int phi dmu = 0.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._kernels import lse_convolve
from .grid import PeriodicGrid
from .heatkernel import heat_multiplier, log_kernel_row

log = logging.getLogger(__name__)

# spectral path: aliasing of the kernel symbol below this is ignored
_ALIAS_TOL = 1e-17
# spectral path: reject when the smoothed field spans more than this ratio
_DYNAMIC_RANGE = 1e-3


class SinkhornError(RuntimeError):
    pass


@dataclass(frozen=True)
class SinkhornConfig:
    eps: float
    tol: float | None = None
    max_iter: int = 100_000
    method: str = "auto"  # auto | lse | spectral

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.tol is not None and not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.method not in ("auto", "lse", "spectral"):
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def tolerance(self) -> float:
        return self.tol if self.tol is not None else 1e-12 * max(1.0, self.eps)


@dataclass(frozen=True)
class PotentialPair:
    phi: np.ndarray
    psi: np.ndarray
    eps: float
    iterations: int
    residual: float
    gauge: str = "int phi dmu = 0"


@dataclass(frozen=True)
class Coupling:
    """Density of pi w.r.t. dx dy on the n x n grid (axis 0: x ~ mu, axis 1: y ~ nu)."""

    grid: PeriodicGrid
    values: np.ndarray

    def marginals(self) -> tuple[np.ndarray, np.ndarray]:
        h = self.grid.spacing
        return h * self.values.sum(axis=1), h * self.values.sum(axis=0)

    def mass(self) -> float:
        return float(self.grid.spacing**2 * self.values.sum())


class KernelOperator:
    """Applies f -> log int K_eps(x - y) exp(a(x)) dx for a fixed (grid, eps)."""

    def __init__(self, grid: PeriodicGrid, eps: float, method: str = "auto"):
        self.grid = grid
        self.eps = eps
        self.logk = log_kernel_row(grid.n, eps) + np.log(grid.spacing)
        aliasing = np.exp(-eps * (grid.n / 2) ** 2 / 2.0)
        self.spectral_ok = aliasing < _ALIAS_TOL
        if method == "spectral" and not self.spectral_ok:
            raise ValueError(f"grid n={grid.n} too coarse for the spectral kernel at eps={eps}")
        self.method = method
        self._mult = heat_multiplier(grid, eps) if self.spectral_ok else None
        self.fallbacks = 0

    def log_apply(self, a: np.ndarray) -> np.ndarray:
        if self.method != "lse" and self.spectral_ok:
            amax = a.max()
            conv = self.grid.apply_multiplier(np.exp(a - amax), self._mult)
            lo, hi = conv.min(), conv.max()
            if lo > _DYNAMIC_RANGE * hi or self.method == "spectral":
                return np.log(conv) + amax
            self.fallbacks += 1
        return lse_convolve(a, self.logk)


@lru_cache(maxsize=64)
def _operator(grid: PeriodicGrid, eps: float, method: str) -> KernelOperator:
    return KernelOperator(grid, eps, method)


def _check_density(grid: PeriodicGrid, rho: np.ndarray, name: str):
    grid._check_shape(rho)
    if not np.all(rho > 0):
        raise ValueError(f"{name} must be strictly positive")


def t_operator(grid: PeriodicGrid, potential: np.ndarray, density: np.ndarray, eps: float,
               method: str = "auto") -> np.ndarray:
    """T[phi](y) = -eps log int exp((phi(x) - c_eps(x, y)) / eps) density(x) dx."""
    _check_density(grid, density, "density")
    op = _operator(grid, float(eps), method)
    return -eps * op.log_apply(potential / eps + np.log(density))


def solve_sinkhorn(grid: PeriodicGrid, mu: np.ndarray, nu: np.ndarray,
                   config: SinkhornConfig) -> PotentialPair:
    """Log-domain Sinkhorn from phi = 0; stops on sup-norm change of phi <= tol."""
    _check_density(grid, mu, "mu")
    _check_density(grid, nu, "nu")
    eps = config.eps
    op = _operator(grid, float(eps), config.method)
    log_mu, log_nu = np.log(mu), np.log(nu)

    def T_mu(phi):
        return -eps * op.log_apply(phi / eps + log_mu)

    def T_nu(psi):
        return -eps * op.log_apply(psi / eps + log_nu)

    tol = config.tolerance
    phi = np.zeros(grid.shape)
    prev_change = np.inf
    increases = 0
    change = np.inf
    for it in range(1, config.max_iter + 1):
        psi = T_mu(phi)
        phi_new = T_nu(psi)
        change = float(np.max(np.abs(phi_new - phi)))
        phi = phi_new
        if it > 1 and change > prev_change:
            increases += 1
        prev_change = change
        if change <= tol:
            break
    else:
        raise SinkhornError(
            f"Sinkhorn did not converge in {config.max_iter} iterations "
            f"(eps={eps}, last change {change:.3e})"
        )
    if increases:
        log.debug("sinkhorn: residual increased on %d sweeps (eps=%g)", increases, eps)
    psi = T_mu(phi)
    c = grid.integrate(phi, mu)
    phi, psi = phi - c, psi + c
    residual = max(float(np.max(np.abs(phi - T_nu(psi)))), float(np.max(np.abs(psi - T_mu(phi)))))
    return PotentialPair(phi, psi, eps, it, residual)


def fixed_point_residual(grid, mu, nu, pair: PotentialPair) -> float:
    r1 = np.max(np.abs(pair.phi - t_operator(grid, pair.psi, nu, pair.eps)))
    r2 = np.max(np.abs(pair.psi - t_operator(grid, pair.phi, mu, pair.eps)))
    return float(max(r1, r2))


def eot_cost(grid: PeriodicGrid, mu, nu, pair: PotentialPair) -> float:
    """int phi dmu + int psi dnu (the exponential term integrates to one at the optimum)."""
    return grid.integrate(pair.phi, mu) + grid.integrate(pair.psi, nu)


def eot(grid: PeriodicGrid, mu, nu, eps: float, **kw) -> tuple[float, PotentialPair]:
    pair = solve_sinkhorn(grid, mu, nu, SinkhornConfig(eps, **kw))
    return eot_cost(grid, mu, nu, pair), pair


def dual_functional(grid: PeriodicGrid, phi, mu, nu, eps: float) -> float:
    """I[phi] = int phi dmu + int T_mu[phi] dnu."""
    return grid.integrate(phi, mu) + grid.integrate(t_operator(grid, phi, mu, eps), nu)


def dual_functional_bar(grid: PeriodicGrid, psi, mu, nu, eps: float) -> float:
    """Mirrored form: int T_nu[psi] dmu + int psi dnu."""
    return grid.integrate(t_operator(grid, psi, nu, eps), mu) + grid.integrate(psi, nu)


_MAX_COUPLING_N = 1024


def coupling(grid: PeriodicGrid, mu, nu, pair: PotentialPair) -> Coupling:
    """Materialize the optimal coupling on the product grid (d = 1)."""
    if grid.dim != 1:
        raise ValueError("couplings are materialized for d = 1 only")
    if grid.n > _MAX_COUPLING_N:
        raise MemoryError(f"n = {grid.n} exceeds the coupling guard {_MAX_COUPLING_N}")
    eps = pair.eps
    logk = log_kernel_row(grid.n, eps)
    L = logk[(np.arange(grid.n)[None, :] - np.arange(grid.n)[:, None]) % grid.n]
    expo = (np.log(mu) + pair.phi / eps)[:, None] + (np.log(nu) + pair.psi / eps)[None, :] + L
    return Coupling(grid, np.exp(expo))


def kernel_matrix_log(grid: PeriodicGrid, eps: float) -> np.ndarray:
    logk = log_kernel_row(grid.n, eps)
    return logk[(np.arange(grid.n)[None, :] - np.arange(grid.n)[:, None]) % grid.n]


def primal_value(grid: PeriodicGrid, pi: Coupling, mu, nu, eps: float) -> float:
    """int c_eps dpi + eps KL(pi || mu x nu) on the materialized coupling."""
    h2 = grid.spacing**2
    p = pi.values
    c = -eps * kernel_matrix_log(grid, eps)
    kl = np.sum(p * np.log(p / (mu[:, None] * nu[None, :]))) * h2
    return float(np.sum(c * p) * h2 + eps * kl)


def coupling_kl(grid: PeriodicGrid, p: Coupling, q: Coupling) -> float:
    """KL(p || q) between two materialized couplings."""
    return float(grid.spacing**2 * np.sum(p.values * np.log(p.values / q.values)))


# -- information functionals ------------------------------------------------
def kl_divergence(grid: PeriodicGrid, p, q) -> float:
    _check_density(grid, p, "p")
    _check_density(grid, q, "q")
    return grid.integrate(np.log(p / q), p)


def entropy(grid: PeriodicGrid, p) -> float:
    """Negative self-entropy H(p) = int p log p."""
    _check_density(grid, p, "p")
    return grid.integrate(np.log(p), p)


def fisher_info(grid: PeriodicGrid, p, q=None) -> float:
    """int |grad log(p/q)|^2 dp (q = Lebesgue when omitted)."""
    _check_density(grid, p, "p")
    r = np.log(p) if q is None else np.log(p / q)
    return grid.integrate(sum(g**2 for g in grid.gradient(r)), p)


def gauge_min_pair_error(grid: PeriodicGrid, phi, phi_ref, mu, psi, psi_ref, nu) -> float:
    """min_c ||phi + c - phi_ref||_{L2(mu)} + ||psi - c - psi_ref||_{L2(nu)}."""
    from scipy.optimize import minimize_scalar

    a, b = phi - phi_ref, psi - psi_ref

    def f(c):
        return np.sqrt(grid.integrate((a + c) ** 2, mu)) + np.sqrt(grid.integrate((b - c) ** 2, nu))

    ca, cb = -grid.integrate(a, mu), grid.integrate(b, nu)
    lo, hi = min(ca, cb), max(ca, cb)
    if hi - lo < 1e-15:
        return float(f(lo))
    res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-14 * max(1, abs(hi))})
    return float(min(res.fun, f(lo), f(hi)))
