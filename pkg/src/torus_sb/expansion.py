"""Small-eps expansion of the Schroedinger system between rho_t and rho_{t+eps}.

With rho_k the Taylor coefficients of the curve at t and L_p = Delta^p / (2^p p!),
the coefficient families solve (formal power series in eps)

    u_0 v_0 rho_0 = 1,   u_0 u_0^dag = v_0 v_0^dag = 1,
    u_k = -u_0 sum_{i=1}^k u_{k-i} u_i^dag          (and the same for v),
    u_k^dag = sum_{l<=k} sum_{i<=l} L_{k-l}(v_i rho_{l-i}),
    v_k^dag = sum_{l<=k} L_{k-l}(u_l rho_0),

i.e. U^dag = K_eps * (V rho_{t+eps}), V^dag = K_eps * (U rho_t) and U U^dag = V V^dag = 1.
Each order reduces to one elliptic problem div(rho_0 grad w) = rhs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from math import factorial

import numpy as np

from .curves import DensityCurve
from .eot import Coupling
from .elliptic import solve_divform
from .grid import PeriodicGrid
from .heatkernel import heat_convolve, log_kernel_row

MAX_ORDER = 4
# relative spectral noise floor for Delta^p, p >= 2 (see PeriodicGrid.laplacian_power)
NOISE_FLOOR = 1e-14
SOLVABILITY_TOL = 1e-8
CASCADE_TOL = 1e-7
INIT_TOL = 1e-9
# order 4 stacks four Laplacians on the round-off floor; its invariants are looser
CASCADE_TOL_TOP = 1e-4


class ExpansionError(RuntimeError):
    pass


class ProxyPositivityError(ExpansionError):
    pass


@dataclass
class ExpansionCoeffs:
    grid: PeriodicGrid
    t: float
    K: int
    rho: list          # rho_0 .. rho_{K+1}
    u: list
    v: list
    u_dag: list
    v_dag: list
    solvability: list = field(default_factory=list)   # |int rhs| per order
    rhs_mismatch: list = field(default_factory=list)  # explicit vs generic rhs, per order >= 1
    cascade: dict = field(default_factory=dict)
    zmax: int = 0                                     # spectral band of the recursion


def spectral_band(grid: PeriodicGrid, f: np.ndarray, rel: float) -> int:
    """Largest |z| (max-norm over axes) whose coefficient exceeds rel * max|c|."""
    c = np.abs(np.fft.fftn(f))
    zabs = np.max(np.abs(np.stack(np.broadcast_arrays(*grid.wavenumbers))), axis=0)
    return int(zabs[c > rel * c.max()].max(initial=0))


def recursion_band(grid: PeriodicGrid, rho: list, log_u0: np.ndarray, K: int) -> int:
    """Band kept by the recursion: resolved band of the order-0 fields, widened by
    the frequency content of the Taylor coefficients once per order."""
    band = max(spectral_band(grid, log_u0, 1e-15), spectral_band(grid, np.log(rho[0]), 1e-15))
    zr = max([spectral_band(grid, r, 1e-13) for r in rho if np.any(r)] + [1])
    return min(grid.n // 2, band + (K + 2) * zr)


class _Ops:
    """Spectral operators restricted to the band |z| <= zmax.

    Every stored coefficient field is projected onto the band: the recursion
    applies Laplacians order after order, and without the projection the
    round-off plateau above the resolved band grows by ~|z|^2 per order.
    """

    def __init__(self, grid: PeriodicGrid, zmax: int | None = None):
        self.grid = grid
        self.zmax = grid.n // 2 if zmax is None else int(zmax)
        zabs = np.max(np.abs(np.stack(np.broadcast_arrays(*grid._rwavenumbers))), axis=0)
        self._mask = zabs <= self.zmax

    def P(self, f):
        if self.zmax >= self.grid.n // 2:
            return f
        return self.grid.apply_multiplier(f, self._mask)

    def L(self, f, p):
        """Delta^p f / (2^p p!)."""
        if p == 0:
            return f
        floor = NOISE_FLOOR if p >= 2 else 0.0
        return self.grid.laplacian_power(self.P(f), p, noise_floor=floor) / (2.0**p * factorial(p))


def _A(ops, u, rho, k):
    """A_k = sum_{l=0}^k L_{k+1-l}(u_l rho_0)."""
    return sum(ops.L(u[l] * rho[0], k + 1 - l) for l in range(k + 1))


def _B(ops, v, rho, k):
    """B_k = sum_{l<=k} sum_{i<=l} L_{k+1-l}(v_i rho_{l-i}) + sum_{i<=k} v_i rho_{k+1-i}."""
    out = sum(v[i] * rho[k + 1 - i] for i in range(k + 1))
    for l in range(k + 1):
        out = out + ops.L(sum(v[i] * rho[l - i] for i in range(l + 1)), k + 1 - l)
    return out


def _C(u, u_dag, k):
    """C_k = -u_0 sum_{i=1}^k u_{k+1-i} u_i^dag."""
    if k == 0:
        return np.zeros_like(u[0])
    return -u[0] * sum(u[k + 1 - i] * u_dag[i] for i in range(1, k + 1))


def _S(ops, u, v, v_dag, rho, k):
    """S_k = v_0^dag D_k - v_0 A_k  (= u_0^dag u_{k+1} + v_0^dag v_{k+1})."""
    D = _C(v, v_dag, k)
    return v_dag[0] * D - v[0] * _A(ops, u, rho, k)


def _level_defect(ops, u, v, u_dag, v_dag, rho, k):
    """u_0^dag C_k - u_0 B_k - S_k: vanishes iff level k+1 of the system is consistent."""
    return u_dag[0] * _C(u, u_dag, k) - u[0] * _B(ops, v, rho, k) - _S(ops, u, v, v_dag, rho, k)


def _fill_order(ops, u, v, u_dag, v_dag, k, w, S_prev, A_prev, B_prev, rho):
    P = ops.P
    u[k] = P(w * u[0])
    v[k] = P(v[0] * (S_prev - w))
    u_dag[k] = P(v[k] * rho[0] + B_prev)
    v_dag[k] = P(u[k] * rho[0] + A_prev)


def _rhs_explicit(ops, u, v, rho, A, B, S, k):
    """Right-hand side of div(rho_0 grad w_k) = rhs at order k >= 1 in closed form."""
    L = ops.L
    u0, v0 = u[0], v[0]
    v0d = 1.0 / v0
    u0d = 1.0 / u0
    term1 = sum((u[k - i] * B[i] - v[k - i] * A[i] for i in range(1, k)), np.zeros_like(u0))
    term2 = v0 * sum(L(u[l] * rho[0], k - l + 1) for l in range(k)) - S[0] * S[k - 1]
    inner = ops.grid.laplacian(u0d * S[k - 1]) / 2.0 + v0 * rho[1] * S[k - 1]
    for l in range(k):
        inner = inner + L(sum(v[i] * rho[l - i] for i in range(l + 1)), k + 1 - l)
    for i in range(k):
        inner = inner + ops.grid.laplacian(v[i] * rho[k - i]) / 2.0 + v[i] * rho[k - i + 1]
    return rho[0] * term1 - rho[0] * term2 + v0d * inner


def _rhs_generic(ops, u, v, u_dag, v_dag, rho, k, S_prev, A_prev, B_prev):
    """-rho_0 times the level-(k+1) defect evaluated at w = 0 (independent assembly)."""
    uu, vv, ud, vd = list(u), list(v), list(u_dag), list(v_dag)
    _fill_order(ops, uu, vv, ud, vd, k, np.zeros_like(u[0]), S_prev, A_prev, B_prev, rho)
    return -rho[0] * _level_defect(ops, uu, vv, ud, vd, rho, k)


def scb_coefficients(curve: DensityCurve, grid: PeriodicGrid, t: float, K: int,
                     rho: list | None = None, cascade_tol: float = CASCADE_TOL) -> ExpansionCoeffs:
    """Solve the expansion system up to order K at time t (needs rho_0..rho_{K+1})."""
    if not 0 <= K <= MAX_ORDER:
        raise ValueError(f"expansion order K must lie in [0, {MAX_ORDER}], got {K}")
    if rho is None:
        rho = curve.taylor_all(grid, t, K + 1)
    if len(rho) < K + 2:
        raise ValueError("need Taylor coefficients rho_0 .. rho_{K+1}")
    if np.min(rho[0]) <= 0:
        raise ExpansionError("rho_0 must be positive")
    n_ord = K + 1
    u, v, u_dag, v_dag = ([None] * n_ord for _ in range(4))
    A, B, S = [None] * n_ord, [None] * n_ord, [None] * n_ord
    coeffs = ExpansionCoeffs(grid, t, K, rho, u, v, u_dag, v_dag)

    # order 0: div(rho_0 grad log u_0) = rho_1 - Delta rho_0 / 2
    rhs = rho[1] - grid.laplacian(rho[0]) / 2.0
    coeffs.solvability.append(abs(grid.quadrature(rhs)))
    log_u0 = solve_divform(grid, rho[0], rhs, tol=1e-12, solvability_tol=SOLVABILITY_TOL)
    u[0] = np.exp(log_u0)
    v[0] = 1.0 / (u[0] * rho[0])
    u_dag[0] = 1.0 / u[0]
    v_dag[0] = 1.0 / v[0]
    if not (np.all(u[0] > 0) and np.all(v[0] > 0)):
        raise ExpansionError("positivity of u_0 / v_0 lost")
    coeffs.zmax = recursion_band(grid, rho, log_u0, K)
    ops = _Ops(grid, coeffs.zmax)
    A[0], B[0] = ops.P(_A(ops, u, rho, 0)), ops.P(_B(ops, v, rho, 0))
    S[0] = ops.P(_S(ops, u, v, v_dag, rho, 0))

    for k in range(1, K + 1):
        rhs = _rhs_explicit(ops, u, v, rho, A, B, S, k)
        generic = _rhs_generic(ops, u, v, u_dag, v_dag, rho, k, S[k - 1], A[k - 1], B[k - 1])
        scale = max(1.0, float(np.max(np.abs(generic))))
        coeffs.rhs_mismatch.append(float(np.max(np.abs(ops.P(rhs - generic)))) / scale)
        mass = abs(grid.quadrature(rhs))
        coeffs.solvability.append(mass)
        if mass > SOLVABILITY_TOL:
            raise ExpansionError(f"order {k}: elliptic solvability violated (|int rhs| = {mass:.3e})")
        w = solve_divform(grid, rho[0], ops.P(rhs), tol=1e-12, solvability_tol=SOLVABILITY_TOL)
        _fill_order(ops, u, v, u_dag, v_dag, k, w, S[k - 1], A[k - 1], B[k - 1], rho)
        if k < K:
            A[k], B[k] = ops.P(_A(ops, u, rho, k)), ops.P(_B(ops, v, rho, k))
            S[k] = ops.P(_S(ops, u, v, v_dag, rho, k))

    coeffs.cascade = cascade_residuals(coeffs)
    bad = {}
    for key, val in coeffs.cascade.items():
        order = key.rsplit("_", 1)[-1]
        tol = INIT_TOL if key.startswith("init") else (CASCADE_TOL_TOP if order == "4" else cascade_tol)
        if val > tol:
            bad[key] = val
    if bad:
        raise ExpansionError(f"cascade invariants violated: {bad}")
    return coeffs


def _rel(r, f) -> float:
    return float(np.max(np.abs(r))) / max(1.0, float(np.max(np.abs(f))))


def cascade_residuals(c: ExpansionCoeffs) -> dict:
    """Sup-norm residuals of every relation of the system, recomputed from scratch.

    Order-k residuals are relative to max(1, sup of the order-k field)."""
    ops = _Ops(c.grid, c.zmax or None)
    u, v, ud, vd, rho = c.u, c.v, c.u_dag, c.v_dag, c.rho
    out = {
        "init_uv_rho": float(np.max(np.abs(u[0] * v[0] * rho[0] - 1.0))),
        "init_u_udag": float(np.max(np.abs(u[0] * ud[0] - 1.0))),
        "init_v_vdag": float(np.max(np.abs(v[0] * vd[0] - 1.0))),
    }
    for k in range(1, c.K + 1):
        out[f"dagger_u_{k}"] = _rel(u[k] + u[0] * sum(u[k - i] * ud[i] for i in range(1, k + 1)), u[k])
        out[f"dagger_v_{k}"] = _rel(v[k] + v[0] * sum(v[k - i] * vd[i] for i in range(1, k + 1)), v[k])
    for k in range(c.K + 1):
        fu = sum(ops.L(sum(v[i] * rho[l - i] for i in range(l + 1)), k - l) for l in range(k + 1))
        fv = sum(ops.L(u[l] * rho[0], k - l) for l in range(k + 1))
        out[f"fourier_u_{k}"] = _rel(ud[k] - fu, ud[k])
        out[f"fourier_v_{k}"] = _rel(vd[k] - fv, vd[k])
    return out


# -- proxies, coefficient functions, cost -----------------------------------
def proxy_potentials(coeffs: ExpansionCoeffs, eps: float, K: int | None = None):
    """(U_K, V_K, eps log U_K, eps log V_K)."""
    K = coeffs.K if K is None else K
    if K > coeffs.K:
        raise ValueError(f"coefficients only available up to order {coeffs.K}")
    U = sum(eps**k * coeffs.u[k] for k in range(K + 1))
    V = sum(eps**k * coeffs.v[k] for k in range(K + 1))
    if not (np.all(U > 0) and np.all(V > 0)):
        raise ProxyPositivityError(
            f"proxy potentials not positive at eps={eps}; max admissible eps ~ "
            f"{max_admissible_eps(coeffs, K):.3g}"
        )
    return U, V, eps * np.log(U), eps * np.log(V)


def max_admissible_eps(coeffs: ExpansionCoeffs, K: int | None = None, hi: float = 10.0) -> float:
    """Largest eps (bisection on [0, hi]) for which U_K, V_K stay positive on the grid."""
    K = coeffs.K if K is None else K

    def ok(e):
        U = sum(e**k * coeffs.u[k] for k in range(K + 1))
        V = sum(e**k * coeffs.v[k] for k in range(K + 1))
        return np.all(U > 0) and np.all(V > 0)

    if ok(hi):
        return hi
    lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


def _log_series(q: list, order: int) -> list:
    """Coefficients c_1..c_order of log(1 + sum_{s>=1} x^s q_s)."""
    out = []
    for m in range(1, order + 1):
        total = np.zeros_like(q[0])
        for l in range(1, m + 1):
            acc = np.zeros_like(q[0])
            for comp in product(range(1, m + 1), repeat=l):
                if sum(comp) == m:
                    term = np.ones_like(q[0])
                    for s in comp:
                        term = term * q[s - 1]
                    acc = acc + term
            total = total + (-1.0) ** (l + 1) / l * acc
        out.append(total)
    return out


def coefficient_functions(coeffs: ExpansionCoeffs, K: int) -> tuple[list, list]:
    """(f_1..f_{K-1}, g_1..g_{K-1}) with eps log U = sum_k eps^k f_k + O(eps^K)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if K - 2 > coeffs.K:
        raise ValueError(f"need coefficients up to order {K - 2}")
    u, v = coeffs.u, coeffs.v
    f, g = [np.log(u[0])], [np.log(v[0])]
    m = K - 2
    if m >= 1:
        f += _log_series([u[s] / u[0] for s in range(1, m + 1)], m)
        g += _log_series([v[s] / v[0] for s in range(1, m + 1)], m)
    return f[: K - 1], g[: K - 1]


def potential_expansion(coeffs: ExpansionCoeffs, K: int, eps: float):
    """(sum_{k=1}^{K-1} eps^k f_k, same for g)."""
    f, g = coefficient_functions(coeffs, K)
    zero = np.zeros(coeffs.grid.shape)
    return (sum((eps ** (k + 1) * fk for k, fk in enumerate(f)), zero),
            sum((eps ** (k + 1) * gk for k, gk in enumerate(g)), zero))


def expansion_cost(coeffs: ExpansionCoeffs, curve: DensityCurve, eps: float, K: int | None = None) -> float:
    """eps int log U_K d rho_t + eps int log V_K d rho_{t+eps}."""
    grid = coeffs.grid
    _, _, phi, psi = proxy_potentials(coeffs, eps, K)
    rho_eps = curve.density(grid, coeffs.t + eps)
    return grid.integrate(phi, coeffs.rho[0]) + grid.integrate(psi, rho_eps)


def remainders(coeffs: ExpansionCoeffs, curve: DensityCurve, eps: float, K: int | None = None):
    """R = rho_e - rho_e V_K K*(U_K rho_0),  Q = rho_0 - rho_0 U_K K*(V_K rho_e)."""
    grid = coeffs.grid
    U, V, _, _ = proxy_potentials(coeffs, eps, K)
    rho0 = coeffs.rho[0]
    rho_e = curve.density(grid, coeffs.t + eps)
    R = rho_e - rho_e * V * heat_convolve(grid, U * rho0, eps)
    Q = rho0 - rho0 * U * heat_convolve(grid, V * rho_e, eps)
    return R, Q


# -- Fredholm correctors ----------------------------------------------------
@dataclass(frozen=True)
class Correctors:
    eps: float
    r_U: np.ndarray
    r_V: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    residual: float
    bound_lhs: float   # ||r_U||^2 + ||r_V||^2
    bound_rhs: float   # 16/eps^2 (||R||^2 + ||Q||^2)


def fredholm_correctors(grid: PeriodicGrid, R: np.ndarray, Q: np.ndarray, eps: float,
                        zero_mode_tol: float = 1e-9) -> Correctors:
    """Solve K_eps*r_U + r_V = R, K_eps*r_V + r_U = Q mode by mode."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    Rh, Qh = grid.transform(R), grid.transform(Q)
    zero = (0,) * grid.dim
    if abs(Rh[zero] - Qh[zero]) > zero_mode_tol:
        raise ExpansionError(f"zero modes of R and Q differ by {abs(Rh[zero] - Qh[zero]):.3e}")
    k2 = sum(k**2 for k in grid.wavenumbers)
    E = np.exp(-0.5 * eps * k2)
    den = 1.0 - E**2
    den[zero] = 1.0
    rUh = (Qh - E * Rh) / den
    rVh = (Rh - E * Qh) / den
    rUh[zero] = rVh[zero] = 0.5 * Rh[zero]
    r_U, r_V = grid.inverse(rUh), grid.inverse(rVh)
    res = max(
        float(np.max(np.abs(heat_convolve(grid, r_U, eps) + r_V - R))),
        float(np.max(np.abs(heat_convolve(grid, r_V, eps) + r_U - Q))),
    )

    def sq(f):
        return grid.quadrature(f**2)

    return Correctors(eps, r_U, r_V, R, Q, res, sq(r_U) + sq(r_V), 16.0 / eps**2 * (sq(R) + sq(Q)))


def build_pi_ub(coeffs: ExpansionCoeffs, corr: Correctors, curve: DensityCurve,
                K: int | None = None) -> Coupling:
    """K_eps(x-y) [rho_t(x) rho_{t+eps}(y) U_K(x) V_K(y) + r_U(x) + r_V(y)]  (d = 1)."""
    grid = coeffs.grid
    if grid.dim != 1:
        raise ValueError("pi_ub is materialized for d = 1 only")
    eps = corr.eps
    U, V, _, _ = proxy_potentials(coeffs, eps, K)
    rho0 = coeffs.rho[0]
    rho_e = curve.density(grid, coeffs.t + eps)
    bracket = (rho0 * U)[:, None] * (rho_e * V)[None, :] + corr.r_U[:, None] + corr.r_V[None, :]
    if np.min(bracket) < 0:
        raise ExpansionError(f"pi_ub bracket negative at eps={eps} (min {np.min(bracket):.3e})")
    n = grid.n
    logk = log_kernel_row(n, eps)
    Kmat = np.exp(logk[(np.arange(n)[None, :] - np.arange(n)[:, None]) % n])
    return Coupling(grid, Kmat * bracket)


def marginal_defect(pi: Coupling, mu: np.ndarray, nu: np.ndarray) -> float:
    m0, m1 = pi.marginals()
    return float(max(np.max(np.abs(m0 - mu)), np.max(np.abs(m1 - nu))))
