import numpy as np
import pytest

from torus_sb.curves import (Term, modulated_curve, perturbed_twin, random_curve, rotating_curve,
                             standard_test_curve, static_curve, uniform_curve, velocity_potential)
from torus_sb.grid import PeriodicGrid


def test_standard_curve_values(g64):
    c = standard_test_curve()
    x = g64.axis_nodes
    assert np.allclose(c.density(g64, 0.3), (1 + 0.5 * np.cos(x - 0.3)) / (2 * np.pi), atol=1e-15)
    assert c.density(g64, 0.0)[0] == pytest.approx(0.238732, abs=1e-6)
    assert c.time_derivative(g64, 0.0)[16] == pytest.approx(0.079577, abs=1e-6)   # x = pi/2


def test_central_difference_first_coefficient(g64):
    # a one-sided quotient carries an O(h) bias of ~4e-7 here; the central one is O(h^2)
    c = standard_test_curve()
    h = 1e-5
    fd = (c.density(g64, 0.2 + h) - c.density(g64, 0.2 - h)) / (2 * h)
    assert np.max(np.abs(fd - c.taylor_coefficient(g64, 0.2, 1))) <= 1e-7


@pytest.mark.parametrize("K", [1, 2, 3])
def test_taylor_remainder_order(K, g64):
    c = random_curve(np.random.default_rng(7))
    rho = c.taylor_all(g64, 0.3, K)
    errs = []
    for eps in (0.04, 0.02, 0.01):
        approx = sum(eps**k * r for k, r in enumerate(rho))
        errs.append(np.max(np.abs(c.density(g64, 0.3 + eps) - approx)))
    slope = np.polyfit(np.log([0.04, 0.02, 0.01]), np.log(errs), 1)[0]
    assert slope > K + 0.8


@pytest.mark.parametrize("seed", range(4))
def test_unit_mass_and_taylor_vs_finite_differences(seed, g64):
    c = random_curve(np.random.default_rng(seed))
    t, h = 0.4, 1e-3
    rho = c.taylor_all(g64, t, 3)
    assert g64.quadrature(rho[0]) == pytest.approx(1.0, abs=1e-13)
    for k in range(1, 4):
        assert abs(g64.quadrature(rho[k])) < 1e-13
    d = lambda s: c.density(g64, s)
    fd1 = (d(t + h) - d(t - h)) / (2 * h)
    fd2 = (d(t + h) - 2 * d(t) + d(t - h)) / h**2 / 2
    fd3 = (d(t + 2 * h) - 2 * d(t + h) + 2 * d(t - h) - d(t - 2 * h)) / (2 * h**3) / 6
    assert np.max(np.abs(rho[1] - fd1)) < 1e-6
    assert np.max(np.abs(rho[2] - fd2)) < 1e-5
    assert np.max(np.abs(rho[3] - fd3)) < 1e-3


def test_mass_normalization_with_constant_terms(g64):
    c = modulated_curve(1, [((0,), [0.2, 0.3], 0.0), ((1,), [0.4, -0.2], 0.5)])
    for t in (0.0, 0.5, 1.0):
        assert g64.quadrature(c.density(g64, t)) == pytest.approx(1.0, abs=1e-14)
    rho = c.taylor_all(g64, 0.5, 2)
    assert abs(g64.quadrature(rho[1])) < 1e-14


def test_margin_and_time_checks():
    with pytest.raises(ValueError, match="margin"):
        static_curve(1, [(1, 0.99, 0.0)], margin=0.05)
    with pytest.raises(ValueError):
        uniform_curve().density(PeriodicGrid(1, 16), 1.5)
    with pytest.raises(ValueError):
        static_curve(1, [((1, 1), 0.2, 0.0)])


def test_rotating_velocity_closed_form(g256):
    """rho_t(x) = rho_0(x - c t) gives Phi' = c + C / rho with C = -2 pi c / int(1/rho)."""
    c = rotating_curve(1, [(1, 0.5, 0.0), (2, 0.2, 0.4)], 0.7)
    vp = velocity_potential(c, g256, 0.3)
    rho = vp.rho
    C = -2 * np.pi * 0.7 / g256.quadrature(1 / rho)
    assert np.max(np.abs(g256.derivative(vp.phi) - (0.7 + C / rho))) < 1e-10
    assert vp.residual < 1e-10


def test_static_curve_has_zero_velocity(g64):
    vp = velocity_potential(static_curve(1, [(1, 0.3, 0.0)]), g64, 0.2)
    assert np.max(np.abs(vp.phi)) < 1e-14


def test_perturbed_twin_is_normalized_product(g64):
    base = standard_test_curve()
    g_terms = [Term((2,), (1.0,), 0.0, 0.3)]
    twin = perturbed_twin(base, 0.1, g_terms)
    x = g64.axis_nodes
    t = 0.25
    raw = base.density(g64, t) * (1 + 0.1 * np.cos(2 * x + 0.3))
    assert np.allclose(twin.density(g64, t), raw / g64.quadrature(raw), atol=1e-14)


def test_2d_curve():
    g = PeriodicGrid(2, 16)
    # the default margin scales with the uniform level 1/(4 pi^2) on T^2
    c = rotating_curve(2, [((1, 1), 0.3, 0.0)], (0.5, -0.2))
    assert c.margin == pytest.approx(0.05 / (2 * np.pi))
    rho = c.density(g, 0.5)
    assert g.quadrature(rho) == pytest.approx(1.0, abs=1e-13)
    vp = velocity_potential(c, g, 0.5)
    assert vp.residual < 1e-8
