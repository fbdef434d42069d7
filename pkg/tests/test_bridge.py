import dataclasses

import numpy as np
import pytest

from torus_sb import bridge as B
from torus_sb import eot as E
from torus_sb.curves import Term, perturbed_twin, static_curve, uniform_curve
from torus_sb.grid import PeriodicGrid
from torus_sb.studies import fit_slope

from .conftest import trig_density


@pytest.fixture(scope="module")
def twin(test_curve):
    return perturbed_twin(test_curve, 0.1, [Term((2,), (1.0,), 0.0, 0.3)])


@pytest.fixture(scope="module")
def bridges4(test_curve, twin, g128):
    tg = B.TimeGrid.uniform(4)
    return B.solve_curve_bridge(test_curve, g128, tg), B.solve_curve_bridge(twin, g128, tg)


def test_timegrid_validation():
    with pytest.raises(ValueError):
        B.TimeGrid((0.0, 0.5, 0.5, 1.0))
    with pytest.raises(ValueError):
        B.TimeGrid((0.0, 0.9))
    with pytest.raises(ValueError):
        B.TimeGrid((0.0,))
    with pytest.raises(ValueError):
        B.TimeGrid.uniform(0)
    tg = B.TimeGrid((0.0, 0.1, 0.5, 1.0))
    assert tg.m == 3 and tg.gaps.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(B.TimeGrid.uniform(4).gaps, 0.25)


def test_gap_guard():
    g = PeriodicGrid(1, 32)
    with pytest.raises(B.BridgeError, match="too small"):
        B.solve_curve_bridge(uniform_curve(), g, B.TimeGrid.uniform(64))


def test_marginal_count():
    g = PeriodicGrid(1, 32)
    with pytest.raises(ValueError):
        B.solve_bridge(g, [np.full(32, 1 / (2 * np.pi))] * 2, B.TimeGrid.uniform(3))


def test_single_interval_uniform(g64):
    sol = B.solve_curve_bridge(uniform_curve(), g64, B.TimeGrid.uniform(1))
    assert len(sol.pairs) == 1
    assert sol.costs[0] == pytest.approx(np.log(2 * np.pi), abs=1e-12)


def test_static_intervals_identical(bumpy, g128):
    sol = B.solve_curve_bridge(bumpy, g128, B.TimeGrid.uniform(4))
    rho = sol.marginals[0]
    ref = sol.pairs[0]
    for p in sol.pairs[1:]:
        assert E.gauge_min_pair_error(g128, p.phi, ref.phi, rho, p.psi, ref.psi, rho) <= 1e-12
        assert sol.costs[0] == pytest.approx(sol.costs[1], abs=1e-14)


def test_markov_composition(bridges4):
    assert B.markov_marginal_defect(bridges4[0]) <= B.MARKOV_TOL
    assert B.markov_marginal_defect(bridges4[1]) <= B.MARKOV_TOL


def test_threads_are_deterministic(test_curve, g128):
    tg = B.TimeGrid.uniform(4)
    a = B.solve_curve_bridge(test_curve, g128, tg, threads=1)
    b = B.solve_curve_bridge(test_curve, g128, tg, threads=3)
    for p, q in zip(a.pairs, b.pairs):
        assert np.array_equal(p.phi, q.phi) and np.array_equal(p.psi, q.psi)


@pytest.mark.parametrize("m", [2, 4, 8])
def test_self_kl_vanishes(m, test_curve, g128):
    sol = B.solve_curve_bridge(test_curve, g128, B.TimeGrid.uniform(m))
    assert abs(B.kl_between_bridges(sol, sol).total) <= 1e-7


def test_kl_matches_couplings(bridges4):
    a = B.kl_between_bridges(*bridges4).total
    b = B.kl_markov_sum(*bridges4)
    assert a > 0
    assert abs(a - b) / b <= 1e-5


def test_kl_brackets_and_gauge(bridges4):
    b_mu, b_nu = bridges4
    dec = B.kl_between_bridges(b_mu, b_nu)
    mk = dec.marginal_kl
    for j, v in enumerate(dec.brackets, start=1):
        # each bracket is a coupling KL minus the two endpoint marginal KLs, so it may be negative,
        # but never below minus the smaller one (data processing)
        pi_kl = E.coupling_kl(b_mu.grid, b_nu.coupling(j), b_mu.coupling(j))
        assert v == pytest.approx(pi_kl - mk[j - 1] - mk[j], abs=1e-10)
        assert v >= -min(mk[j - 1], mk[j]) - 1e-10
    assert all(v >= 0 for v in dec.marginal_kl)
    assert dec.total == pytest.approx(sum(dec.brackets) + sum(dec.marginal_kl), abs=1e-14)
    shifted = [dataclasses.replace(p, phi=p.phi + c, psi=p.psi - c) for p, c in zip(b_mu.pairs, (0.3, -1.0, 2.0, 5.0))]
    moved = dataclasses.replace(b_mu, pairs=shifted)
    assert B.kl_between_bridges(moved, b_nu).total == pytest.approx(dec.total, abs=1e-12)


def test_kl_layout_mismatch(test_curve, g128, g64):
    a = B.solve_curve_bridge(test_curve, g128, B.TimeGrid.uniform(2))
    b = B.solve_curve_bridge(test_curve, g128, B.TimeGrid.uniform(4))
    with pytest.raises(ValueError):
        B.kl_between_bridges(a, b)
    c = B.solve_curve_bridge(test_curve, g64, B.TimeGrid.uniform(2))
    with pytest.raises(ValueError):
        B.kl_between_bridges(a, c)


def test_stability_uniform(g64):
    tg = B.TimeGrid.uniform(4)
    nu = B.curve_marginals(uniform_curve(), g64, tg)
    rep = B.stability_rhs(uniform_curve(), nu, tg, g64)
    assert rep.rhs_integral == pytest.approx(0.0, abs=1e-20)
    assert abs(rep.lhs_kl) <= 1e-12
    assert rep.rhs_total == pytest.approx(0.0, abs=1e-20)


def test_stability_integral_decays(test_curve, g128):
    pts = []
    for m in (4, 8, 16):
        tg = B.TimeGrid.uniform(m)
        rep = B.stability_rhs(test_curve, B.curve_marginals(test_curve, g128, tg), tg, g128, with_lhs=False)
        assert np.isnan(rep.lhs_kl)
        pts.append((m, rep.rhs_integral))
    assert fit_slope(pts)[0] <= -0.7


def test_stability_report_twin(test_curve, twin, g128):
    tg = B.TimeGrid.uniform(4)
    rep = B.stability_rhs(test_curve, B.curve_marginals(twin, g128, tg), tg, g128, diagnostics=True)
    assert rep.lhs_kl >= -1e-8
    assert all(np.isfinite(v) for v in rep.as_dict().values())
    assert len(rep.S) == len(rep.delta1) == len(rep.delta2) == 4
    assert rep.rhs_total == pytest.approx(rep.rhs_terminal_kl + sum(rep.interval_terms), abs=1e-15)


def test_fit_twin_constant():
    assert B.fit_twin_constant([4, 8, 16], [1.0, 1.0, 1.0], [2.0, 2.0, 2.0]) == 0.0
    assert B.fit_twin_constant([4, 8, 16], [0, 1.5, 1.25], [0, 1.0, 1.0]) == pytest.approx(4.0)


# -- entropic upper bound ---------------------------------------------------
def test_conforti_uniform(g64):
    u = np.full(64, 1 / (2 * np.pi))
    res = B.conforti_bound(g64, u, u, 0.1)
    assert res.bound == pytest.approx(0.1 * np.log(2 * np.pi), abs=1e-12)
    assert res.gap == pytest.approx(0.0, abs=1e-12)


def test_conforti_random_intervals(g128):
    rng = np.random.default_rng(5)
    x = g128.axis_nodes
    for _ in range(10):
        a = trig_density(x, [(int(rng.integers(1, 4)), rng.uniform(0, 0.5), rng.uniform(0, 6))])
        b = trig_density(x, [(int(rng.integers(1, 4)), rng.uniform(0, 0.5), rng.uniform(0, 6))])
        eps = float(rng.choice([0.05, 0.1, 0.2]))
        res = B.conforti_bound(g128, a, b, eps)
        assert res.eot <= res.bound + 1e-6


def test_conforti_self_transport(g128):
    rho = trig_density(g128.axis_nodes, [(1, 0.5, 0.0)])
    gaps = []
    for eps in (0.05, 0.1, 0.2):
        res = B.conforti_bound(g128, rho, rho, eps)
        assert res.w2_squared <= 1e-20
        assert res.bound == pytest.approx(-eps * E.entropy(g128, rho) + eps**2 / 8 * E.fisher_info(g128, rho),
                                          abs=1e-12)
        gaps.append(res.gap)
    assert 0 <= gaps[0] < gaps[1] < gaps[2]


# -- per-interval diagnostics -------------------------------------------------
def test_sj_uniform(g64):
    u = np.full(64, 1 / (2 * np.pi))
    d = B.s_j_diagnostics(uniform_curve(), u, u, 0.0, 0.25, g64)
    assert abs(d.S) <= 1e-12 and abs(d.delta1) <= 1e-14 and abs(d.delta2) <= 1e-14


@pytest.mark.parametrize("m", [4, 8])
def test_sj_identity_and_delta1_bound(m, test_curve, twin, g256):
    tg = B.TimeGrid.uniform(m)
    for src in (test_curve, twin):
        nu = B.curve_marginals(src, g256, tg)
        for j in (1, m):
            d = B.s_j_diagnostics(test_curve, nu[j - 1], nu[j], tg.times[j - 1], float(tg.gaps[j - 1]), g256)
            assert d.identity_residual <= 1e-4
            assert abs(d.delta1) <= d.delta1_bound + 1e-14


def test_sj_static_self(bumpy, g128):
    rho = bumpy.density(g128, 0.0)
    d = B.s_j_diagnostics(bumpy, rho, rho, 0.0, 0.25, g128)
    assert d.identity_residual <= 1e-4
    assert abs(d.delta1) <= 1e-14
    assert d.kl_prev == 0.0


def test_rejects_2d():
    g2 = PeriodicGrid(2, 16)
    c = static_curve(2, [((1, 0), 0.3, 0.0)])
    tg = B.TimeGrid.uniform(2)
    with pytest.raises(ValueError):
        B.stability_rhs(c, B.curve_marginals(c, g2, tg), tg, g2)
