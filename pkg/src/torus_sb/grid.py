"""Uniform periodic grids on the flat torus T^d = [0, 2*pi)^d, d in {1, 2}.

Fourier coefficients use the normalization

    f_hat(z) = (2*pi)^-d * int_{T^d} f(x) exp(-i z.x) dx,

which on the grid is ``fftn(values) / n**d``.  Every spatial operator in the
package (derivatives, Laplacian powers, heat convolution) is a multiplier in
this basis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PeriodicGrid:
    """Tensor grid with ``n`` nodes per axis, x_j = j * 2*pi / n."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 8 or self.n % 2:
            raise ValueError(f"n must be an even integer >= 8, got {self.n}")

    @property
    def spacing(self) -> float:
        return TWO_PI / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @cached_property
    def axis_nodes(self) -> np.ndarray:
        return np.arange(self.n) * self.spacing

    @cached_property
    def nodes(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays of shape ``self.shape``, one per axis."""
        if self.dim == 1:
            return (self.axis_nodes.copy(),)
        return tuple(np.meshgrid(self.axis_nodes, self.axis_nodes, indexing="ij"))

    # -- wavenumbers -------------------------------------------------------
    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Integer frequencies on the full FFT layout (broadcastable)."""
        k = np.fft.fftfreq(self.n, d=1.0 / self.n)
        if self.dim == 1:
            return (k,)
        return (k[:, None], k[None, :])

    @cached_property
    def _rwavenumbers(self) -> tuple[np.ndarray, ...]:
        """Integer frequencies on the rfftn layout (last axis halved)."""
        kr = np.fft.rfftfreq(self.n, d=1.0 / self.n)
        if self.dim == 1:
            return (kr,)
        k = np.fft.fftfreq(self.n, d=1.0 / self.n)
        return (k[:, None], kr[None, :])

    @property
    def _axes(self) -> tuple[int, ...]:
        return tuple(range(self.dim))

    @cached_property
    def _rk2(self) -> np.ndarray:
        return sum(k**2 for k in self._rwavenumbers)

    @cached_property
    def _nyquist_masks(self) -> tuple[np.ndarray, ...]:
        return tuple(np.abs(k) == self.n // 2 for k in self._rwavenumbers)

    # -- quadrature --------------------------------------------------------
    def quadrature(self, values: np.ndarray) -> float:
        """Rectangle rule h^d * sum(values); spectrally accurate for smooth data."""
        return float(self.cell_volume * np.sum(values))

    def integrate(self, values: np.ndarray, weight: np.ndarray) -> float:
        return self.quadrature(values * weight)

    # -- transforms --------------------------------------------------------
    def transform(self, values: np.ndarray) -> np.ndarray:
        self._check_shape(values)
        return np.fft.fftn(values) / self.size

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        if coeffs.shape != self.shape:
            raise ValueError(f"coefficient shape {coeffs.shape} does not match grid {self.shape}")
        return np.real(np.fft.ifftn(coeffs * self.size))

    def apply_multiplier(self, values: np.ndarray, mult: np.ndarray) -> np.ndarray:
        """Multiply the rfft coefficients of a real field by ``mult``."""
        self._check_shape(values)
        return np.fft.irfftn(np.fft.rfftn(values) * mult, s=self.shape, axes=self._axes)

    # -- differential operators --------------------------------------------
    def derivative(self, values: np.ndarray, axis: int = 0, order: int = 1) -> np.ndarray:
        """Spectral d^order/dx_axis^order.  Odd orders drop the Nyquist mode."""
        if not 0 <= axis < self.dim:
            raise ValueError(f"axis {axis} out of range for dim {self.dim}")
        if order < 0:
            raise ValueError("order must be >= 0")
        if order == 0:
            return np.array(values, dtype=float, copy=True)
        k = self._rwavenumbers[axis]
        mult = (1j * k) ** order
        if order % 2:
            mult = np.where(self._nyquist_masks[axis], 0.0, mult)
        return self.apply_multiplier(values, mult)

    def gradient(self, values: np.ndarray) -> list[np.ndarray]:
        return [self.derivative(values, a, 1) for a in range(self.dim)]

    def divergence(self, components) -> np.ndarray:
        return sum(self.derivative(c, a, 1) for a, c in enumerate(components))

    def laplacian_power(self, values: np.ndarray, p: int = 1, noise_floor: float = 0.0) -> np.ndarray:
        """Delta^p via the multiplier (-|z|^2)^p.

        ``noise_floor > 0`` zeroes coefficients below ``noise_floor * max|c|``
        before multiplying; high powers otherwise amplify round-off in the
        upper half of the spectrum by |z|^(2p).
        """
        if p < 0:
            raise ValueError("p must be >= 0")
        if p == 0:
            return np.array(values, dtype=float, copy=True)
        self._check_shape(values)
        c = np.fft.rfftn(values)
        if noise_floor > 0.0:
            a = np.abs(c)
            c = np.where(a > noise_floor * a.max(), c, 0.0)
        return np.fft.irfftn(c * (-self._rk2) ** p, s=self.shape, axes=self._axes)

    def laplacian(self, values: np.ndarray) -> np.ndarray:
        return self.laplacian_power(values, 1)

    def inverse_laplacian(self, values: np.ndarray) -> np.ndarray:
        """Zero-mean solution of Delta u = values (mean of values ignored)."""
        k2 = self._rk2
        mult = np.zeros_like(k2)
        np.divide(-1.0, k2, out=mult, where=k2 > 0)
        return self.apply_multiplier(values, mult)

    def antiderivative(self, values: np.ndarray) -> np.ndarray:
        """Zero-mean antiderivative of the zero-mean part of a 1D field."""
        if self.dim != 1:
            raise ValueError("antiderivative is defined for d=1 only")
        k = self._rwavenumbers[0]
        mult = np.zeros(k.shape, dtype=complex)
        ok = (k != 0) & ~self._nyquist_masks[0]
        mult[ok] = 1.0 / (1j * k[ok])
        return self.apply_multiplier(values, mult)

    def _check_shape(self, values: np.ndarray):
        if np.shape(values) != self.shape:
            raise ValueError(f"field shape {np.shape(values)} does not match grid {self.shape}")


@dataclass(frozen=True)
class GridField:
    """Samples of a real function on a periodic grid."""

    grid: PeriodicGrid
    values: np.ndarray
    nyquist_zeroed: bool = field(default=False, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients on the full FFT layout (see module docstring)."""

    grid: PeriodicGrid
    coeffs: np.ndarray

    def __post_init__(self):
        if np.shape(self.coeffs) != self.grid.shape:
            raise ValueError(
                f"coefficient shape {np.shape(self.coeffs)} does not match grid {self.grid.shape}"
            )

    @property
    def frequencies(self) -> tuple[np.ndarray, ...]:
        return self.grid.wavenumbers

    def is_hermitian(self, atol: float = 1e-14) -> bool:
        c = self.coeffs
        flipped = np.conj(np.roll(np.flip(c), 1, axis=tuple(range(c.ndim))))
        return bool(np.allclose(c, flipped, rtol=0.0, atol=atol * max(1.0, np.abs(c).max())))


def transform(f: GridField) -> SpectralField:
    return SpectralField(f.grid, f.grid.transform(f.values))


def inverse(s: SpectralField) -> GridField:
    return GridField(s.grid, s.grid.inverse(s.coeffs))


def quadrature(f: GridField) -> float:
    return f.grid.quadrature(f.values)


def derivative(f: GridField, axis: int = 0, order: int = 1) -> GridField:
    return GridField(f.grid, f.grid.derivative(f.values, axis, order), nyquist_zeroed=bool(order % 2))


def laplacian_power(f: GridField, p: int) -> GridField:
    return GridField(f.grid, f.grid.laplacian_power(f.values, p))


def gauge_distance(grid: PeriodicGrid, f: np.ndarray, g: np.ndarray, weight: np.ndarray) -> float:
    """min_c ||f - g - c||_{L^2(weight)} for a probability density ``weight``."""
    d = f - g
    c = grid.integrate(d, weight) / grid.quadrature(weight)
    return float(np.sqrt(max(grid.integrate((d - c) ** 2, weight), 0.0)))
