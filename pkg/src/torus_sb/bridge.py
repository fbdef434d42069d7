"""Multi-marginal Schroedinger bridges through a chain of two-marginal problems.

A bridge with marginals nu_0..nu_m at times t_0 < ... < t_m is Markov: it is
determined by the optimal couplings pi_j of EOT_{eps_j}(nu_{j-1}, nu_j) with
eps_j = t_j - t_{j-1}, so every functional below works on per-interval
potentials and never on path measures.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import eot as _eot
from .curves import DensityCurve, velocity_potential
from .eot import PotentialPair, SinkhornConfig, SinkhornError
from .expansion import scb_coefficients
from .grid import PeriodicGrid
from .ot1d import geodesic, w2_circle

log = logging.getLogger(__name__)

# Sinkhorn feasibility heuristic on the gap: eps_j * n^2 >= MIN_EPS_N2
MIN_EPS_N2 = 20.0
MARKOV_TOL = 1e-7


class BridgeError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    times: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a time grid needs at least two points")
        if not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        if abs(t[0]) > 1e-14 or abs(t[-1] - 1.0) > 1e-14:
            raise ValueError("times must run from 0 to 1")
        object.__setattr__(self, "times", tuple(float(v) for v in t))

    @classmethod
    def uniform(cls, m: int) -> "TimeGrid":
        if m < 1:
            raise ValueError("m must be >= 1")
        return cls(tuple(np.linspace(0.0, 1.0, m + 1)))

    @property
    def m(self) -> int:
        return len(self.times) - 1

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(np.asarray(self.times))


@dataclass
class BridgeSolution:
    grid: PeriodicGrid
    timegrid: TimeGrid
    marginals: list
    pairs: list          # PotentialPair per interval j = 1..m (index j - 1)
    costs: list          # EOT_{eps_j}(nu_{j-1}, nu_j)

    def coupling(self, j: int):
        """Optimal coupling of interval j (1-based), d = 1."""
        return _eot.coupling(self.grid, self.marginals[j - 1], self.marginals[j], self.pairs[j - 1])


def check_gap(grid: PeriodicGrid, eps: float):
    if eps * grid.n**2 < MIN_EPS_N2:
        raise BridgeError(f"gap eps={eps:.4g} too small for n={grid.n} (need eps n^2 >= {MIN_EPS_N2})")


def _map(fn, items, threads: int):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def solve_bridge(grid: PeriodicGrid, marginals, timegrid: TimeGrid, tol: float | None = None,
                 method: str = "auto", threads: int = 1) -> BridgeSolution:
    """Per-interval Sinkhorn solves; intervals are independent and may run concurrently."""
    if len(marginals) != timegrid.m + 1:
        raise ValueError(f"need {timegrid.m + 1} marginals, got {len(marginals)}")
    gaps = timegrid.gaps
    for e in gaps:
        check_gap(grid, float(e))

    def one(j):
        eps = float(gaps[j - 1])
        try:
            pair = _eot.solve_sinkhorn(grid, marginals[j - 1], marginals[j], SinkhornConfig(eps, tol, method=method))
        except SinkhornError as exc:
            raise BridgeError(f"interval {j} (eps={eps:.4g}) failed: {exc}") from exc
        return pair, _eot.eot_cost(grid, marginals[j - 1], marginals[j], pair)

    out = _map(one, list(range(1, timegrid.m + 1)), threads)
    return BridgeSolution(grid, timegrid, list(marginals), [p for p, _ in out], [c for _, c in out])


def curve_marginals(curve: DensityCurve, grid: PeriodicGrid, timegrid: TimeGrid) -> list:
    return [curve.density(grid, t) for t in timegrid.times]


def solve_curve_bridge(curve: DensityCurve, grid: PeriodicGrid, timegrid: TimeGrid, **kw) -> BridgeSolution:
    return solve_bridge(grid, curve_marginals(curve, grid, timegrid), timegrid, **kw)


def markov_marginal_defect(sol: BridgeSolution) -> float:
    """Push nu_0 through the composed transition kernels; sup defect against nu_j (d = 1)."""
    h = sol.grid.spacing
    p = sol.marginals[0]
    worst = 0.0
    for j in range(1, sol.timegrid.m + 1):
        pi = sol.coupling(j).values
        P = pi / sol.marginals[j - 1][:, None]
        p = h * (p @ P)
        worst = max(worst, float(np.max(np.abs(p - sol.marginals[j]))))
    return worst


# -- KL between bridges -----------------------------------------------------
@dataclass(frozen=True)
class KLDecomposition:
    total: float
    brackets: tuple       # (1/eps_j)[EOT^nu_j - int phi^mu_j dnu_{j-1} - int psi^mu_j dnu_j]
    marginal_kl: tuple    # KL(nu_j || mu_j), j = 0..m


def _same_layout(a: BridgeSolution, b: BridgeSolution):
    if a.grid != b.grid:
        raise ValueError("bridges live on different spatial grids")
    if a.timegrid != b.timegrid:
        raise ValueError("bridges use different time grids")


def kl_between_bridges(bridge_mu: BridgeSolution, bridge_nu: BridgeSolution) -> KLDecomposition:
    """KL(R^nu || R^mu) from the potentials of R^mu and the EOT costs of R^nu."""
    _same_layout(bridge_mu, bridge_nu)
    g = bridge_mu.grid
    nu = bridge_nu.marginals
    brackets = []
    for j, (e, pair, cost_nu) in enumerate(zip(bridge_mu.timegrid.gaps, bridge_mu.pairs, bridge_nu.costs), 1):
        inner = cost_nu - g.integrate(pair.phi, nu[j - 1]) - g.integrate(pair.psi, nu[j])
        brackets.append(float(inner / e))
    mkl = [_eot.kl_divergence(g, a, b) for a, b in zip(nu, bridge_mu.marginals)]
    return KLDecomposition(float(sum(brackets) + sum(mkl)), tuple(brackets), tuple(mkl))


def kl_markov_sum(bridge_mu: BridgeSolution, bridge_nu: BridgeSolution) -> float:
    """sum_j KL(pi^nu_j || pi^mu_j) - sum_{interior j} KL(nu_j || mu_j) on materialized couplings."""
    _same_layout(bridge_mu, bridge_nu)
    g = bridge_mu.grid
    m = bridge_mu.timegrid.m
    total = sum(_eot.coupling_kl(g, bridge_nu.coupling(j), bridge_mu.coupling(j)) for j in range(1, m + 1))
    total -= sum(_eot.kl_divergence(g, bridge_nu.marginals[j], bridge_mu.marginals[j]) for j in range(1, m))
    return float(total)


# -- geodesic quadrature ----------------------------------------------------
def _gauss(nodes: int):
    s, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * (s + 1.0), 0.5 * w


def _score_gap(grid, grad_phi_mu, rho_mu, pt, eps):
    """Integrand | grad Phi^mu - v_t - 1/2 grad log(rho^mu / rho_bar_t) |^2 at a geodesic point."""
    v = pt.velocity_gradient / eps
    score = grid.derivative(np.log(rho_mu) - np.log(pt.density), 0, 1)
    return grid.integrate((grad_phi_mu - v - 0.5 * score) ** 2, pt.density)


@dataclass
class StabilityReport:
    m: int
    lhs_kl: float
    rhs_terminal_kl: float
    rhs_integral: float
    rhs_total: float
    interval_terms: list
    S: list = field(default_factory=list)
    delta1: list = field(default_factory=list)
    delta2: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "m": self.m, "lhs_kl": self.lhs_kl, "rhs_terminal_kl": self.rhs_terminal_kl,
            "rhs_integral": self.rhs_integral, "rhs_total": self.rhs_total,
        }


def stability_rhs(curve_mu: DensityCurve, nu_marginals, timegrid: TimeGrid, grid: PeriodicGrid,
                  quad_nodes: int = 5, with_lhs: bool = True, diagnostics: bool = False,
                  threads: int = 1, tol: float | None = None) -> StabilityReport:
    """Computable terms of the bridge stability bound (d = 1).

    rhs = KL(nu_m || mu_m) + 1/2 sum_j int_{t_{j-1}}^{t_j} int |grad Phi_bar^mu_{t_{j-1}}
          - grad Phi_bar^nu_t - 1/2 grad log(rho^mu_{t_{j-1}} / rho_bar^nu_t)|^2 d rho_bar^nu_t dt,
    with piecewise displacement interpolations for both families.  The O(1/m)
    remainder is not estimated.
    """
    if grid.dim != 1:
        raise ValueError("stability_rhs is implemented for d = 1")
    mu_marg = curve_marginals(curve_mu, grid, timegrid)
    if len(nu_marginals) != timegrid.m + 1:
        raise ValueError("nu marginals do not match the time grid")
    s_nodes, s_w = _gauss(quad_nodes)
    gaps = timegrid.gaps

    def interval(j):
        eps = float(gaps[j - 1])
        tr_mu = w2_circle(grid, mu_marg[j - 1], mu_marg[j])
        grad_mu = tr_mu.displacement / eps          # geodesic velocity of the mu family at t_{j-1}
        tr_nu = w2_circle(grid, nu_marginals[j - 1], nu_marginals[j])
        acc = 0.0
        for s, w in zip(s_nodes, s_w):
            acc += w * _score_gap(grid, grad_mu, mu_marg[j - 1], geodesic(tr_nu, s), eps)
        return 0.5 * eps * acc

    terms = _map(interval, list(range(1, timegrid.m + 1)), threads)
    terminal = _eot.kl_divergence(grid, nu_marginals[-1], mu_marg[-1])
    integral = float(sum(terms))
    lhs = float("nan")
    if with_lhs:
        b_mu = solve_bridge(grid, mu_marg, timegrid, tol=tol, threads=threads)
        b_nu = solve_bridge(grid, list(nu_marginals), timegrid, tol=tol, threads=threads)
        lhs = kl_between_bridges(b_mu, b_nu).total
        if lhs < -1e-8:
            raise BridgeError(f"negative bridge KL {lhs:.3e}")
    rep = StabilityReport(timegrid.m, lhs, float(terminal), integral, float(terminal + integral), list(terms),
                          metadata={"n": grid.n, "quad_nodes": quad_nodes, "remainder": "O(1/m), not estimated"})
    if diagnostics:
        for j in range(1, timegrid.m + 1):
            d = s_j_diagnostics(curve_mu, nu_marginals[j - 1], nu_marginals[j], timegrid.times[j - 1],
                                float(gaps[j - 1]), grid, quad_nodes)
            rep.S.append(d.S)
            rep.delta1.append(d.delta1)
            rep.delta2.append(d.delta2)
    return rep


# -- entropic upper bound along the geodesic ---------------------------------
@dataclass(frozen=True)
class ConfortiResult:
    bound: float
    eot: float
    w2_squared: float
    fisher_integral: float

    @property
    def gap(self) -> float:
        return self.bound - self.eot


def conforti_bound(grid: PeriodicGrid, rho_a, rho_b, eps: float, quad_nodes: int = 5,
                   check: bool = True, tol: float | None = None) -> ConfortiResult:
    """W2^2 - eps/2 (H(a) + H(b)) + eps/8 int_0^eps I(rho_bar) dt  (time rescaled to the gap)."""
    if grid.dim != 1:
        raise ValueError("conforti_bound is implemented for d = 1")
    tr = w2_circle(grid, rho_a, rho_b)
    s_nodes, s_w = _gauss(quad_nodes)
    fisher = sum(w * _eot.fisher_info(grid, geodesic(tr, s).density) for s, w in zip(s_nodes, s_w))
    bound = (tr.w2_squared - 0.5 * eps * (_eot.entropy(grid, rho_a) + _eot.entropy(grid, rho_b))
             + eps**2 / 8.0 * fisher)
    cost, _ = _eot.eot(grid, rho_a, rho_b, eps, tol=tol)
    res = ConfortiResult(float(bound), float(cost), tr.w2_squared, float(fisher))
    if check and cost > bound + 1e-6:
        raise BridgeError(f"EOT {cost:.10g} exceeds the geodesic bound {bound:.10g} at eps={eps}")
    return res


# -- per-interval simplification diagnostics ---------------------------------
@dataclass(frozen=True)
class SjDiagnostics:
    S: float
    delta1: float
    delta2: float
    integral: float            # 1/2 int int |grad Phi^mu - v - 1/2 grad log(rho^mu/rho_bar)|^2
    kl_prev: float             # KL(nu_{j-1} || mu_{t_{j-1}})
    identity_residual: float
    delta1_bound: float        # Lip(v_1 / v_0) * W2 (standard metric)


def s_j_diagnostics(curve_mu: DensityCurve, nu_prev, nu_next, t_prev: float, eps: float,
                    grid: PeriodicGrid, quad_nodes: int = 5) -> SjDiagnostics:
    """S_j, its two remainders and the residual of the identity that links them (d = 1)."""
    if grid.dim != 1:
        raise ValueError("s_j_diagnostics is implemented for d = 1")
    co = scb_coefficients(curve_mu, grid, t_prev, 1)
    u0, u1, v0, v1 = co.u[0], co.u[1], co.v[0], co.v[1]
    rho_mu = co.rho[0]
    tr = w2_circle(grid, nu_prev, nu_next)
    s_nodes, s_w = _gauss(quad_nodes)
    pts = [geodesic(tr, s) for s in s_nodes]

    fisher = sum(w * _eot.fisher_info(grid, p.density) for p, w in zip(pts, s_w))
    H = _eot.entropy(grid, nu_prev) + _eot.entropy(grid, nu_next)
    conf = tr.w2_squared - 0.5 * eps * H + eps**2 / 8.0 * fisher
    lin = grid.integrate(np.log(u0) + eps * u1 / u0, nu_prev) + grid.integrate(np.log(v0) + eps * v1 / v0, nu_next)
    S = conf / eps - lin

    grad_phi = grid.derivative(velocity_potential(curve_mu, grid, t_prev).phi, 0, 1)
    integral = 0.5 * eps * sum(w * _score_gap(grid, grad_phi, rho_mu, p, eps) for p, w in zip(pts, s_w))
    kl_prev = _eot.kl_divergence(grid, nu_prev, rho_mu)
    ratio = v1 / v0
    delta1 = grid.integrate(ratio, nu_next) - grid.integrate(ratio, nu_prev)
    q = v0 * grid.laplacian(1.0 / v0)
    delta2 = 0.5 * eps * sum(w * (grid.integrate(q, p.density) - grid.integrate(q, nu_prev))
                             for p, w in zip(pts, s_w))
    resid = abs(S - (integral - kl_prev - eps * delta1 - delta2))
    lip = float(np.max(np.abs(grid.derivative(ratio, 0, 1))))
    return SjDiagnostics(float(S), float(delta1), float(delta2), float(integral), float(kl_prev),
                         float(resid), lip * float(np.sqrt(2.0 * tr.w2_squared)))


def fit_twin_constant(ms, lhs, rhs) -> float:
    """Smallest c >= 0 with lhs <= rhs + c/m at the two largest m."""
    order = np.argsort(ms)[-2:]
    return float(max(0.0, max(m * (a - b) for m, a, b in zip(np.asarray(ms)[order], np.asarray(lhs)[order],
                                                              np.asarray(rhs)[order]))))
