import numpy as np
import pytest

from torus_sb.grid import PeriodicGrid
from torus_sb.heatkernel import (cost, cost_oscillation, default_kmax, heat_convolve, kernel_bounds,
                                 kernel_values, log_kernel_1d, torus_distance)


def theta_series(x, eps, modes=400):
    """Independent oracle: K(x) = (1/2pi) sum_z exp(-eps z^2 / 2) cos(z x)."""
    z = np.arange(1, modes)
    return (1 + 2 * np.sum(np.exp(-eps * z**2 / 2) * np.cos(np.multiply.outer(x, z)), axis=-1)) / (2 * np.pi)


@pytest.mark.parametrize("eps", [0.05, 0.5, 1.0, 3.0])
def test_image_sum_matches_fourier_series(eps):
    x = np.linspace(-np.pi, np.pi, 37)
    ref = theta_series(x, eps)
    assert np.max(np.abs(np.exp(log_kernel_1d(x, eps)) - ref)) < 1e-13 * ref.max()


def test_kernel_has_unit_mass():
    g = PeriodicGrid(1, 128)
    for eps in (0.05, 0.5, 2.0):
        assert g.quadrature(kernel_values(g, eps).values) == pytest.approx(1.0, abs=1e-12)


def test_kmax_rule():
    assert default_kmax(0.01) == 1
    assert default_kmax(10.0) >= 2


def test_periodicity_and_symmetry():
    x = np.linspace(0, 2 * np.pi, 11)
    a, b = log_kernel_1d(x, 0.3), log_kernel_1d(x + 2 * np.pi, 0.3)
    assert np.allclose(a, b, atol=1e-13)
    assert np.allclose(log_kernel_1d(-x, 0.3), a, atol=1e-13)
    assert cost(0.4, 1.9, 0.2) == pytest.approx(cost(1.9, 0.4, 0.2), abs=1e-15)


def test_cost_2d_is_sum_of_axes():
    c2 = cost(np.array([0.1, 0.2]), np.array([1.0, 3.0]), 0.5, dim=2)
    assert c2 == pytest.approx(cost(0.1, 1.0, 0.5) + cost(0.2, 3.0, 0.5), abs=1e-13)


def test_small_eps_cost_tends_to_half_squared_distance():
    eps = 1e-3
    c = cost(0.0, 0.5, eps)
    ref = 0.5 * 0.25 + 0.5 * eps * np.log(2 * np.pi * eps)
    assert c == pytest.approx(ref, abs=1e-12)


def test_torus_distance():
    assert torus_distance(0.1, 2 * np.pi - 0.1) == pytest.approx(0.2)
    assert torus_distance(np.array([0.0, 0.0]), np.array([np.pi, 0.1])) == pytest.approx(np.hypot(np.pi, 0.1))


@pytest.mark.parametrize("dim", [1, 2])
@pytest.mark.parametrize("eps", [0.1, 0.5, 1.0])
def test_two_sided_gaussian_bound(dim, eps):
    g = PeriodicGrid(dim, 32 if dim == 2 else 128)
    K = kernel_values(g, eps).values
    lo, hi = kernel_bounds(g, eps)
    assert np.all(lo <= K * (1 + 1e-14)) and np.all(K <= hi)
    assert cost_oscillation(g, eps) < 4 * np.pi**2 * dim


@pytest.mark.parametrize("s,t", [(0.1, 0.2), (0.3, 0.7)])
def test_semigroup(s, t):
    """Direct quadrature of K_s * K_t against the image-sum K_{s+t}."""
    g = PeriodicGrid(1, 256)
    Ks, Kt = kernel_values(g, s).values, kernel_values(g, t).values
    idx = (np.arange(256)[:, None] - np.arange(256)[None, :]) % 256
    conv = g.spacing * (Kt[idx] @ Ks)
    assert np.max(np.abs(conv - kernel_values(g, s + t).values)) < 1e-12


def test_heat_convolve_matches_direct_sum():
    g = PeriodicGrid(1, 128)
    x = g.axis_nodes
    f = np.exp(np.sin(x))
    K = kernel_values(g, 0.4).values
    idx = (np.arange(128)[:, None] - np.arange(128)[None, :]) % 128
    assert np.allclose(heat_convolve(g, f, 0.4), g.spacing * (K[idx] @ f), atol=1e-13)
    assert np.array_equal(heat_convolve(g, f, 0.0), f)
    with pytest.raises(ValueError):
        heat_convolve(g, f, -1.0)
