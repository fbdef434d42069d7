import numpy as np
import pytest

from torus_sb.elliptic import EllipticError, apply_divform, residual, solve_divform
from torus_sb.grid import PeriodicGrid


def manufactured_1d(g):
    x = g.axis_nodes
    rho = 1.0 + 0.6 * np.cos(x) + 0.2 * np.sin(3 * x)
    u = np.sin(2 * x) + 0.5 * np.cos(x)
    u -= u.mean()
    # f = (rho u')' written out by hand
    du = 2 * np.cos(2 * x) - 0.5 * np.sin(x)
    d2u = -4 * np.sin(2 * x) - 0.5 * np.cos(x)
    drho = -0.6 * np.sin(x) + 0.6 * np.cos(3 * x)
    return rho, u, drho * du + rho * d2u


def test_manufactured_1d():
    g = PeriodicGrid(1, 128)
    rho, u, f = manufactured_1d(g)
    sol = solve_divform(g, rho, f)
    assert np.max(np.abs(sol - u)) < 1e-10
    assert residual(g, rho, sol, f) < 1e-12


def test_manufactured_2d():
    g = PeriodicGrid(2, 32)
    x, y = g.nodes
    rho = 1.0 + 0.4 * np.cos(x) * np.sin(y)
    u = np.sin(x + y) + 0.3 * np.cos(2 * y)
    u -= u.mean()
    # f = d_x(rho u_x) + d_y(rho u_y), closed form
    ux, uy = np.cos(x + y), np.cos(x + y) - 0.6 * np.sin(2 * y)
    uxx, uyy = -np.sin(x + y), -np.sin(x + y) - 1.2 * np.cos(2 * y)
    rx, ry = -0.4 * np.sin(x) * np.sin(y), 0.4 * np.cos(x) * np.cos(y)
    f = rx * ux + rho * uxx + ry * uy + rho * uyy
    sol = solve_divform(g, rho, f, tol=1e-13)
    assert np.max(np.abs(sol - u)) < 1e-10


def test_constant_rho_is_poisson():
    g = PeriodicGrid(1, 64)
    x = g.axis_nodes
    sol = solve_divform(g, np.full(64, 2.0), np.cos(3 * x))
    assert np.allclose(sol, -np.cos(3 * x) / 18.0, atol=1e-14)


def test_apply_divform_roundtrip():
    g = PeriodicGrid(1, 64)
    rho, u, f = manufactured_1d(g)
    assert np.allclose(apply_divform(g, rho, u), f, atol=1e-11)


def test_solvability_and_positivity_errors():
    g = PeriodicGrid(1, 64)
    x = g.axis_nodes
    with pytest.raises(ValueError, match="solvability"):
        solve_divform(g, np.ones(64), np.ones(64))
    with pytest.raises(ValueError, match="positive"):
        solve_divform(g, np.cos(x), np.sin(x))


def test_pcg_reports_nonconvergence():
    g = PeriodicGrid(2, 32)
    x, y = g.nodes
    rho = 1.0 + 0.9 * np.cos(x) * np.cos(y)
    with pytest.raises(EllipticError):
        solve_divform(g, rho, np.sin(x) * np.sin(3 * y), tol=1e-14, max_iter=2)
