"""Numerical studies behind the command line driver.

Each study maps a validated config to a list of measurement rows plus the
slope fits / checks that decide its exit status.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import bridge as B
from . import eot as E
from . import expansion as X
from .curves import (DensityCurve, Term, modulated_curve, perturbed_twin, random_curve, rotating_curve,
                     standard_test_curve, static_curve, uniform_curve)
from .grid import PeriodicGrid

SLOPE_MARGIN = 0.3


@dataclass(frozen=True)
class Row:
    study: str
    param_name: str
    param_value: float
    K: int
    n: int
    quantity: str
    value: float
    reference: float
    runtime_ms: float


@dataclass(frozen=True)
class SlopeSpec:
    quantity: str
    K: int
    threshold: float
    direction: str   # ">=" or "<="


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: float
    passed: bool


def fit_slope(points) -> tuple[float, float, float]:
    """OLS fit of log y = slope log x + intercept; returns (slope, intercept, r^2)."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise ValueError("fit_slope needs at least 3 points")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise ValueError("fit_slope needs positive x and y")
    lx = np.log([p[0] for p in pts])
    ly = np.log([p[1] for p in pts])
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum((ly - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)


# -- curve specs --------------------------------------------------------------
def build_curve(spec: dict) -> DensityCurve:
    kind = spec.get("kind", "standard")
    dim = int(spec.get("dim", 1))
    modes = [tuple(m) for m in spec.get("modes", [])]
    if kind == "standard":
        return standard_test_curve()
    if kind == "uniform":
        return uniform_curve(dim)
    if kind == "static":
        return static_curve(dim, modes)
    if kind == "rotating":
        return rotating_curve(dim, modes, spec.get("velocity", 1.0))
    if kind == "modulated":
        return modulated_curve(dim, modes)
    if kind == "random":
        return random_curve(np.random.default_rng(int(spec.get("seed", 0))), dim,
                            int(spec.get("n_modes", 2)), int(spec.get("max_freq", 3)),
                            float(spec.get("total_amp", 0.6)))
    raise ValueError(f"unknown curve kind {kind!r}")


def build_twin(curve: DensityCurve, spec: dict) -> DensityCurve:
    terms = [Term(tuple(int(v) for v in np.atleast_1d(z)), (float(a),), 0.0, float(ph))
             for z, a, ph in spec.get("modes", [[[2], 1.0, 0.3]])]
    return perturbed_twin(curve, float(spec.get("delta", 0.1)), terms)


# -- helpers ----------------------------------------------------------------
class _Clock:
    def __init__(self, enabled: bool):
        self.enabled = enabled

    def __call__(self, fn, *a, **kw):
        t0 = time.perf_counter()
        out = fn(*a, **kw)
        ms = (time.perf_counter() - t0) * 1e3 if self.enabled else 0.0
        return out, round(ms, 3)


def _fan_out(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _rate_slopes(quantity, Ks, offset):
    return [SlopeSpec(quantity, K, K + offset, ">=") for K in Ks]


# -- studies ----------------------------------------------------------------
def cost_rates(cfg: dict, clock: _Clock, threads: int):
    curve, grid, t = build_curve(cfg["curve"]), PeriodicGrid(1, cfg["n"]), cfg["t"]
    Ks, tol = cfg["K"], cfg["tolerances"].get("sinkhorn")
    co = X.scb_coefficients(curve, grid, t, max(Ks))
    mu = curve.density(grid, t)

    def one(eps):
        nu = curve.density(grid, t + eps)
        (cost, _), ms = clock(E.eot, grid, mu, nu, eps, tol=tol)
        out = [Row("cost_rates", "eps", eps, 0, grid.n, "eot_cost", cost, float("nan"), ms)]
        for K in Ks:
            approx = X.expansion_cost(co, curve, eps, K)
            out.append(Row("cost_rates", "eps", eps, K, grid.n, "expansion_cost", approx, cost, 0.0))
            out.append(Row("cost_rates", "eps", eps, K, grid.n, "cost_error", abs(cost - approx), 0.0, 0.0))
        return out

    rows = [r for rs in _fan_out(one, cfg["eps"], threads) for r in rs]
    return rows, _rate_slopes("cost_error", Ks, 1 - SLOPE_MARGIN), []


def potential_rates(cfg: dict, clock: _Clock, threads: int):
    curve, grid, t = build_curve(cfg["curve"]), PeriodicGrid(1, cfg["n"]), cfg["t"]
    Ks, tol = cfg["K"], cfg["tolerances"].get("sinkhorn")
    co = X.scb_coefficients(curve, grid, t, max(max(Ks) - 2, 0))
    mu = curve.density(grid, t)

    def one(eps):
        nu = curve.density(grid, t + eps)
        (_, pair), ms = clock(E.eot, grid, mu, nu, eps, tol=tol)
        out = []
        for K in Ks:
            f, g = X.potential_expansion(co, K, eps)
            err = E.gauge_min_pair_error(grid, pair.phi, f, mu, pair.psi, g, nu)
            out.append(Row("potential_rates", "eps", eps, K, grid.n, "potential_error", err, 0.0, ms))
        return out

    rows = [r for rs in _fan_out(one, cfg["eps"], threads) for r in rs]
    return rows, _rate_slopes("potential_error", Ks, -SLOPE_MARGIN), []


def self_transport(cfg: dict, clock: _Clock, threads: int):
    curve, grid = build_curve(cfg["curve"]), PeriodicGrid(1, cfg["n"])
    Ks, tol = cfg["K"], cfg["tolerances"].get("sinkhorn")
    t = cfg["t"]
    co = X.scb_coefficients(curve, grid, t, max(max(Ks) - 2, 0))
    rho = curve.density(grid, t)

    def one(eps):
        (_, pair), ms = clock(E.eot, grid, rho, rho, eps, tol=tol)
        out = []
        for K in Ks:
            f, _ = X.potential_expansion(co, K, eps)
            d = grid.derivative(pair.phi - f, 0, 1)
            err = float(np.sqrt(grid.integrate(d**2, rho)))
            out.append(Row("self_transport", "eps", eps, K, grid.n, "grad_error", err, 0.0, ms))
        return out

    rows = [r for rs in _fan_out(one, cfg["eps"], threads) for r in rs]
    return rows, _rate_slopes("grad_error", Ks, -SLOPE_MARGIN), []


def stability_vs_m(cfg: dict, clock: _Clock, threads: int):
    curve, grid = build_curve(cfg["curve"]), PeriodicGrid(1, cfg["n"])
    twin = build_twin(curve, cfg["twin"]) if cfg.get("twin") else None
    tol = cfg["tolerances"].get("sinkhorn")
    rows, lhs, rhs = [], [], []
    for m in cfg["m"]:
        tg = B.TimeGrid.uniform(m)
        nu = B.curve_marginals(twin or curve, grid, tg)
        rep, ms = clock(B.stability_rhs, curve, nu, tg, grid, with_lhs=True, threads=threads, tol=tol)
        for q in ("lhs_kl", "rhs_terminal_kl", "rhs_integral", "rhs_total"):
            rows.append(Row("stability_vs_m", "m", m, 0, grid.n, q, getattr(rep, q), float("nan"),
                            ms if q == "lhs_kl" else 0.0))
        lhs.append(rep.lhs_kl)
        rhs.append(rep.rhs_total)
    slopes, checks = [], []
    if twin is None:
        slopes.append(SlopeSpec("rhs_integral", 0, -1.0 + SLOPE_MARGIN, "<="))
    else:
        c = B.fit_twin_constant(cfg["m"], lhs, rhs)
        worst = max(a - b - c / m for m, a, b in zip(cfg["m"], lhs, rhs))
        rows.append(Row("stability_vs_m", "m", 0, 0, grid.n, "fitted_c", c, float("nan"), 0.0))
        checks.append(Check("lhs <= rhs + c/m at every m", worst, 0.0, worst <= 1e-12))
    return rows, slopes, checks


def identities(cfg: dict, clock: _Clock, threads: int):
    curve, grid = build_curve(cfg["curve"]), PeriodicGrid(1, cfg["n"])
    tol = cfg["tolerances"].get("sinkhorn")
    rows, checks = [], []

    def add(name, value, threshold, ms=0.0, param=0.0):
        rows.append(Row("identities", "case", param, 0, grid.n, name, value, threshold, ms))
        checks.append(Check(name, value, threshold, bool(value <= threshold)))

    tg = B.TimeGrid.uniform(cfg.get("m_identity", 4))
    b_mu, ms = clock(B.solve_curve_bridge, curve, grid, tg, tol=tol, threads=threads)
    add("markov_marginal_defect", B.markov_marginal_defect(b_mu), B.MARKOV_TOL, ms)
    add("self_bridge_kl", abs(B.kl_between_bridges(b_mu, b_mu).total), 1e-7)
    if cfg.get("twin"):
        b_nu = B.solve_curve_bridge(build_twin(curve, cfg["twin"]), grid, tg, tol=tol, threads=threads)
        a, b = B.kl_between_bridges(b_mu, b_nu).total, B.kl_markov_sum(b_mu, b_nu)
        add("kl_formula_vs_couplings_rel", abs(a - b) / max(abs(b), 1e-300), 1e-5)
    co = X.scb_coefficients(curve, grid, cfg["t"], 3)
    add("cascade_max", max(co.cascade.values()), X.CASCADE_TOL)
    add("solvability_max", max(co.solvability), X.SOLVABILITY_TOL)
    return rows, [], checks


STUDIES = {
    "cost_rates": cost_rates,
    "potential_rates": potential_rates,
    "self_transport": self_transport,
    "stability_vs_m": stability_vs_m,
    "identities": identities,
}
