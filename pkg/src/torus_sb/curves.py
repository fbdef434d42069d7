"""Analytic density curves t -> rho_t on T^d.

A curve is stored as a trigonometric polynomial with polynomial-in-time
amplitudes and linear phases,

    P(x, t) = 1 + sum_terms A(t) cos(z.x + omega t + phase),
    rho_t(x) = (2 pi)^-d P(x, t) / N(t),

where N(t) = 1 + (sum of the z = 0 terms) restores unit mass.  All time
derivatives are closed form; rho^(k)_t denotes the k-th Taylor coefficient
(1/k!) d^k/dt^k rho_t.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, factorial, pi

import numpy as np

from .elliptic import apply_divform, solve_divform
from .grid import PeriodicGrid

N_POSITIVITY_SAMPLES = 1024
_T_SLACK = 1e-12


@dataclass(frozen=True)
class Term:
    """A(t) cos(z.x + omega t + phase) with A a polynomial (ascending coefficients)."""

    z: tuple[int, ...]
    amp: tuple[float, ...]
    omega: float = 0.0
    phase: float = 0.0

    def amp_taylor(self, t: float, m: int) -> float:
        """m-th Taylor coefficient of A at t."""
        return float(sum(comb(i, m) * a * t ** (i - m) for i, a in enumerate(self.amp) if i >= m))

    def taylor_weights(self, t: float, k: int) -> list[tuple[float, float]]:
        """(weight, extra phase) pairs: k-th Taylor coefficient is
        sum_j weight_j cos(z.x + omega t + phase + extra_j)."""
        out = []
        for j in range(k + 1):
            a = self.amp_taylor(t, k - j)
            if a == 0.0:
                continue
            w = a * self.omega**j / factorial(j)
            if w != 0.0:
                out.append((w, j * pi / 2.0))
        return out

    @property
    def is_constant_in_x(self) -> bool:
        return not any(self.z)


def _mul_terms(a: Term, b: Term) -> list[Term]:
    amp = tuple(np.convolve(a.amp, b.amp) * 0.5)
    za, zb = np.array(a.z), np.array(b.z)
    return [
        Term(tuple(int(v) for v in za - zb), amp, a.omega - b.omega, a.phase - b.phase),
        Term(tuple(int(v) for v in za + zb), amp, a.omega + b.omega, a.phase + b.phase),
    ]


def default_margin(dim: int) -> float:
    """Absolute positivity margin, scaled with the uniform level (2pi)^-d."""
    return 0.05 * (2 * pi) ** (1 - dim)


@dataclass(frozen=True)
class DensityCurve:
    dim: int
    terms: tuple[Term, ...]
    margin: float | None = None    # default: default_margin(dim)
    name: str = "curve"
    check: bool = field(default=True, compare=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        for term in self.terms:
            if len(term.z) != self.dim:
                raise ValueError(f"term wavevector {term.z} does not match dim {self.dim}")
        if self.margin is None:
            object.__setattr__(self, "margin", default_margin(self.dim))
        if not 0.0 < self.margin < 1.0:
            raise ValueError("positivity margin must lie in (0, 1)")
        if self.check:
            lo, hi = self.range_bounds()
            if lo < self.margin or hi > 1.0 / self.margin:
                raise ValueError(
                    f"curve {self.name!r} violates margin {self.margin}: "
                    f"density range [{lo:.4g}, {hi:.4g}]"
                )

    @property
    def max_frequency(self) -> int:
        return max([max(abs(v) for v in t.z) for t in self.terms] + [0])

    # -- evaluation --------------------------------------------------------
    def _check_t(self, t: float):
        if not -_T_SLACK <= t <= 1.0 + _T_SLACK:
            raise ValueError(f"t = {t} outside [0, 1]")

    def _mass_taylor(self, t: float, K: int) -> np.ndarray:
        N = np.zeros(K + 1)
        N[0] = 1.0
        for term in self.terms:
            if term.is_constant_in_x:
                for k in range(K + 1):
                    for w, ph in term.taylor_weights(t, k):
                        N[k] += w * np.cos(term.omega * t + term.phase + ph)
        return N

    def _numerator_taylor(self, grid: PeriodicGrid, t: float, K: int) -> list[np.ndarray]:
        if grid.dim != self.dim:
            raise ValueError("grid and curve dimensions differ")
        out = [np.zeros(grid.shape) for _ in range(K + 1)]
        out[0] += 1.0
        for term in self.terms:
            base = sum(zi * xi for zi, xi in zip(term.z, grid.nodes)) + term.omega * t + term.phase
            for k in range(K + 1):
                for w, ph in term.taylor_weights(t, k):
                    out[k] += w * np.cos(base + ph)
        return out

    def taylor_all(self, grid: PeriodicGrid, t: float, K: int) -> list[np.ndarray]:
        """[rho^(0)_t, ..., rho^(K)_t] on the grid."""
        self._check_t(t)
        num = self._numerator_taylor(grid, t, K)
        N = self._mass_taylor(t, K)
        r = np.zeros(K + 1)  # Taylor coefficients of 1/N
        r[0] = 1.0 / N[0]
        for j in range(1, K + 1):
            r[j] = -r[0] * sum(N[i] * r[j - i] for i in range(1, j + 1))
        scale = (2.0 * pi) ** (-self.dim)
        return [scale * sum(num[k - j] * r[j] for j in range(k + 1)) for k in range(K + 1)]

    def density(self, grid: PeriodicGrid, t: float) -> np.ndarray:
        return self.taylor_all(grid, t, 0)[0]

    def taylor_coefficient(self, grid: PeriodicGrid, t: float, k: int) -> np.ndarray:
        if k < 0:
            raise ValueError("k must be >= 0")
        return self.taylor_all(grid, t, k)[k]

    def time_derivative(self, grid: PeriodicGrid, t: float) -> np.ndarray:
        return self.taylor_all(grid, t, 1)[1]

    def range_bounds(self, n_times: int = N_POSITIVITY_SAMPLES) -> tuple[float, float]:
        """min / max of rho over a grid and n_times samples of [0, 1]."""
        n = max(32, 8 * self.max_frequency)
        n += n % 2
        grid = PeriodicGrid(self.dim, n)
        lo, hi = np.inf, -np.inf
        for t in np.linspace(0.0, 1.0, n_times):
            rho = self.density(grid, float(t))
            lo, hi = min(lo, rho.min()), max(hi, rho.max())
        return float(lo), float(hi)


# -- constructors -----------------------------------------------------------
def _vec(z, dim):
    z = (z,) if np.isscalar(z) else tuple(z)
    if len(z) != dim:
        raise ValueError(f"wavevector {z} does not match dim {dim}")
    return tuple(int(v) for v in z)


def static_curve(dim: int, modes=(), margin: float | None = None, name: str = "static") -> DensityCurve:
    """rho(x) = (2pi)^-d (1 + sum a cos(z.x + phase)); modes = [(z, a, phase)]."""
    terms = tuple(Term(_vec(z, dim), (float(a),), 0.0, float(ph)) for z, a, ph in modes)
    return DensityCurve(dim, terms, margin, name)


def uniform_curve(dim: int = 1) -> DensityCurve:
    return DensityCurve(dim, (), None, "uniform")


def rotating_curve(dim: int, modes, velocity, margin: float | None = None, name: str = "rotating") -> DensityCurve:
    """rho_t(x) = rho_0(x - velocity * t) for a static profile given by ``modes``."""
    c = np.atleast_1d(np.asarray(velocity, dtype=float))
    terms = []
    for z, a, ph in modes:
        zz = _vec(z, dim)
        terms.append(Term(zz, (float(a),), -float(np.dot(zz, c)), float(ph)))
    return DensityCurve(dim, tuple(terms), margin, name)


def modulated_curve(dim: int, modes, margin: float | None = None, name: str = "modulated") -> DensityCurve:
    """Amplitude modulation; modes = [(z, [a0, a1, ...], phase)] with A(t) = sum a_i t^i."""
    terms = tuple(Term(_vec(z, dim), tuple(float(v) for v in amp), 0.0, float(ph)) for z, amp, ph in modes)
    return DensityCurve(dim, terms, margin, name)


def perturbed_twin(curve: DensityCurve, delta: float, g_terms, margin: float | None = None,
                   name: str | None = None) -> DensityCurve:
    """rho^nu_t = normalize(rho^mu_t (1 + delta g(x, t))), with g a sum of Terms."""
    g = [Term(t.z, tuple(delta * a for a in t.amp), t.omega, t.phase) for t in g_terms]
    terms = list(curve.terms) + g
    for a in curve.terms:
        for b in g:
            terms.extend(_mul_terms(a, b))
    terms = [t for t in terms if any(v != 0.0 for v in t.amp)]
    return DensityCurve(curve.dim, tuple(terms), curve.margin if margin is None else margin,
                        name or f"{curve.name}-twin")


def standard_test_curve() -> DensityCurve:
    """rho_t(x) = (1 + 0.5 cos(x - t)) / (2 pi)."""
    return rotating_curve(1, [(1, 0.5, 0.0)], 1.0, name="rotating-cos")


def random_curve(rng: np.random.Generator, dim: int = 1, n_modes: int = 2, max_freq: int = 3,
                 total_amp: float = 0.6, margin: float | None = None) -> DensityCurve:
    """Random smooth curve mixing rotation and polynomial amplitude modulation."""
    weights = rng.dirichlet(np.ones(n_modes)) * total_amp
    terms = []
    for w in weights:
        z = tuple(int(v) for v in rng.integers(-max_freq, max_freq + 1, size=dim))
        if not any(z):
            z = (1,) + (0,) * (dim - 1)
        # |A(t)| <= w on [0, 1]: A(t) = w (c0 + c1 t) with |c0| + |c1| <= 1
        c1 = rng.uniform(-0.5, 0.5)
        c0 = (1.0 - abs(c1)) * rng.uniform(0.5, 1.0)
        terms.append(Term(z, (w * c0, w * c1), float(rng.uniform(-2.0, 2.0)), float(rng.uniform(0, 2 * pi))))
    return DensityCurve(dim, tuple(terms), margin, "random")


# -- continuity equation ----------------------------------------------------
@dataclass(frozen=True)
class VelocityPotential:
    t: float
    phi: np.ndarray
    rho: np.ndarray
    residual: float


def velocity_potential(curve: DensityCurve, grid: PeriodicGrid, t: float) -> VelocityPotential:
    """Zero-mean Phi_t with div(rho_t grad Phi_t) = -d/dt rho_t."""
    rho, drho = curve.taylor_all(grid, t, 1)
    phi = solve_divform(grid, rho, -drho, tol=1e-12)
    res = np.max(np.abs(drho + apply_divform(grid, rho, phi)))
    scale = max(np.max(np.abs(drho)), 1e-300)
    if res > 1e-8 * scale and np.max(np.abs(drho)) > 0:
        raise RuntimeError(f"continuity residual {res:.2e} too large at t={t}")
    return VelocityPotential(t, phi, rho, float(res))
