import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from torus_sb import eot as E
from torus_sb.grid import PeriodicGrid
from torus_sb.ot1d import w2_circle
from torus_sb.studies import fit_slope

from .conftest import trig_density

G = PeriodicGrid(1, 64)
X = G.axis_nodes

mode = st.tuples(st.integers(1, 4), st.floats(0.0, 0.3), st.floats(0.0, 2 * np.pi))
density = st.lists(mode, min_size=0, max_size=2).map(lambda m: trig_density(X, m))
smooth = st.lists(st.floats(-1.0, 1.0), min_size=4, max_size=4).map(
    lambda c: sum(a * np.cos((k + 1) * X + k) for k, a in enumerate(c)))

settings.register_profile("ci", max_examples=25, deadline=None, derandomize=True)
settings.load_profile("ci")


@given(density, smooth, st.floats(-5, 5), st.sampled_from([0.05, 0.2, 1.0]))
def test_t_operator_shift(mu, phi, c, eps):
    a = E.t_operator(G, phi, mu, eps)
    assert np.max(np.abs(E.t_operator(G, phi + c, mu, eps) - (a - c))) <= 1e-11 * max(1, abs(c))


@given(density, smooth, st.sampled_from([0.05, 0.2]))
def test_t_operator_antitone(mu, phi, eps):
    bump = 0.1 * (1.5 + np.cos(X))
    assert np.all(E.t_operator(G, phi + bump, mu, eps) <= E.t_operator(G, phi, mu, eps) + 1e-13)


@given(density, density)
def test_kl_nonnegative(p, q):
    assert E.kl_divergence(G, p, q) >= -1e-15


@given(density, density)
def test_w2_symmetric(p, q):
    # the two directions integrate against different densities: agreement is limited by n = 64 quadrature
    a, b = w2_circle(G, p, q).w2_squared, w2_circle(G, q, p).w2_squared
    assert abs(a - b) <= 1e-7 and a >= 0


@given(density, density, st.sampled_from([0.1, 0.3]))
def test_eot_cost_bounded_by_independent_coupling(p, q, eps):
    # the product coupling is feasible: cost <= int int c_eps dp dq
    cost, pair = E.eot(G, p, q, eps)
    C = -eps * E.kernel_matrix_log(G, eps)
    upper = G.spacing**2 * p @ C @ q
    assert cost <= upper + 1e-10
    assert np.all(np.isfinite(pair.phi))


@given(st.floats(-4, 4), st.floats(0.1, 10))
def test_fit_slope_recovers_power(k, a):
    x = np.geomspace(0.01, 1, 5)
    assert abs(fit_slope(zip(x, a * x**k))[0] - k) <= 1e-10
