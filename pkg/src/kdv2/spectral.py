"""Periodic grid, Fourier transforms, and diagonal spectral operators.

All other modules build on the primitives here: a uniform periodic grid,
real fields with a dual physical/spectral representation, and Fourier
multipliers (derivatives, fractional derivatives |k|^sigma, the dispersive
phase group exp(i k^3 t), the Hilbert transform, and 2/3-rule dealiasing).

Conventions:

* Forward transform divides by N, so spectral coefficients are Fourier-series
  coefficients and mode amplitudes are resolution independent.
* Wavenumbers are k_j = 2*pi*j/L for j in {-N/2+1, ..., N/2}; the Nyquist
  mode carries the positive sign.
* Every odd power of k is evaluated with the Nyquist entry zeroed (the sign
  of k at Nyquist is ambiguous and zeroing keeps real fields real).  This
  applies to odd-order derivatives, the Hilbert transform, and the cubic
  phase of the dispersive group.
* |k|^sigma at k = 0 is defined as 0 for all sigma >= 0, so D^0 is the
  projection off the mean and D^a D^b = D^(a+b) on zero-mean fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Grid",
    "GridField",
    "SpectralMultiplier",
    "to_spectral",
    "to_physical",
    "derivative",
    "fractional_derivative",
    "airy_group",
    "hilbert_transform",
    "dealias",
    "l2_norm",
    "sup_norm",
    "spectral_l2_norm",
    "integral",
    "hsigma_norm",
]

PHYSICAL = "physical"
SPECTRAL = "spectral"


class Grid:
    """Uniform periodic grid on [0, L) with 2^p points."""

    def __init__(self, n_points: int, length: float):
        if n_points < 16 or (n_points & (n_points - 1)) != 0:
            raise ValueError(f"n_points must be a power of two >= 16, got {n_points}")
        if length <= 0:
            raise ValueError(f"length must be positive, got {length}")
        self.n = int(n_points)
        self.length = float(length)
        self.dx = self.length / self.n
        self.x = self.dx * np.arange(self.n)

        # j = 0, 1, ..., N/2, -N/2+1, ..., -1  (Nyquist assigned +N/2)
        j = np.fft.fftfreq(self.n, d=1.0 / self.n)
        j[self.n // 2] = self.n // 2
        self.k = (2.0 * np.pi / self.length) * j

        # Odd-power convention: Nyquist zeroed.
        self.k_odd = self.k.copy()
        self.k_odd[self.n // 2] = 0.0

        self.k_max = float(np.max(np.abs(self.k)))
        self.dealias_mask = np.abs(self.k) <= (2.0 / 3.0) * self.k_max

        # index map k -> -k used for Hermitian symmetrization
        self._conj_index = (-np.arange(self.n)) % self.n

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and self.n == other.n
            and self.length == other.length
        )

    def __hash__(self):
        return hash((self.n, self.length))

    def __repr__(self):
        return f"Grid(n_points={self.n}, length={self.length:g})"


@dataclass
class GridField:
    """Real periodic field in either physical samples or spectral coefficients."""

    grid: Grid
    data: np.ndarray
    rep: str = PHYSICAL

    def __post_init__(self):
        if self.rep not in (PHYSICAL, SPECTRAL):
            raise ValueError(f"unknown representation tag {self.rep!r}")
        if self.data.shape != (self.grid.n,):
            raise ValueError(
                f"data shape {self.data.shape} does not match grid with {self.grid.n} points"
            )

    def copy(self) -> "GridField":
        return GridField(self.grid, self.data.copy(), self.rep)

    @classmethod
    def from_values(cls, grid: Grid, values) -> "GridField":
        return cls(grid, np.asarray(values, dtype=float), PHYSICAL)

    @classmethod
    def zeros(cls, grid: Grid) -> "GridField":
        return cls(grid, np.zeros(grid.n), PHYSICAL)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> "GridField":
        return cls(grid, np.asarray(fn(grid.x), dtype=float), PHYSICAL)


def _hermitian_symmetrize(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Project onto Hermitian-symmetric coefficients (real-valued fields)."""
    return 0.5 * (coeffs + np.conj(coeffs[grid._conj_index]))


def to_spectral(f: GridField) -> GridField:
    """Forward transform; coefficients normalized by 1/N and symmetrized."""
    if f.rep != PHYSICAL:
        raise ValueError("to_spectral expects a physical-representation field")
    coeffs = np.fft.fft(f.data) / f.grid.n
    coeffs = _hermitian_symmetrize(f.grid, coeffs)
    return GridField(f.grid, coeffs, SPECTRAL)


def to_physical(f: GridField) -> GridField:
    """Inverse transform back to real samples."""
    if f.rep != SPECTRAL:
        raise ValueError("to_physical expects a spectral-representation field")
    values = np.fft.ifft(f.data * f.grid.n)
    return GridField(f.grid, values.real, PHYSICAL)


def _spectral(f: GridField) -> np.ndarray:
    """Coefficient array of f, transforming if needed."""
    if f.rep == SPECTRAL:
        return f.data
    return to_spectral(f).data


def _wrap_spectral(f: GridField, coeffs: np.ndarray) -> GridField:
    """Return a new field with the given coefficients, in f's representation."""
    out = GridField(f.grid, coeffs, SPECTRAL)
    if f.rep == PHYSICAL:
        return to_physical(out)
    return out


@dataclass
class SpectralMultiplier:
    """Diagonal Fourier-space operator defined by a symbol of the wavenumber.

    ``odd_convention`` selects the wavenumber array with the Nyquist entry
    zeroed; use it for any symbol that is an odd function of k.
    """

    symbol: Callable[[np.ndarray], np.ndarray]
    odd_convention: bool = False

    def values(self, grid: Grid) -> np.ndarray:
        k = grid.k_odd if self.odd_convention else grid.k
        return np.asarray(self.symbol(k))

    def apply(self, f: GridField) -> GridField:
        return _wrap_spectral(f, self.values(f.grid) * _spectral(f))


def derivative(f: GridField, order: int = 1) -> GridField:
    """Spectral derivative of the given order; k=0 (and Nyquist, odd orders) annihilated."""
    if order < 1 or order != int(order):
        raise ValueError(f"order must be a positive integer, got {order}")
    grid = f.grid
    k = grid.k_odd if order % 2 == 1 else grid.k
    mult = (1j * k) ** order
    return _wrap_spectral(f, mult * _spectral(f))


def fractional_derivative(f: GridField, sigma: float) -> GridField:
    """|k|^sigma multiplier with |0|^sigma := 0 (projection off the mean at sigma=0)."""
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    grid = f.grid
    mult = np.zeros(grid.n)
    nonzero = grid.k != 0.0
    mult[nonzero] = np.abs(grid.k[nonzero]) ** sigma
    return _wrap_spectral(f, mult * _spectral(f))


def airy_phase(grid: Grid, t: float) -> np.ndarray:
    """Unit-modulus multiplier exp(i k^3 t) of the third-derivative group."""
    return np.exp(1j * grid.k_odd**3 * t)


def airy_group(f: GridField, t: float) -> GridField:
    """Evolve f by the unitary group of u_t + u_xxx = 0 for time t (any sign)."""
    return _wrap_spectral(f, airy_phase(f.grid, t) * _spectral(f))


def hilbert_transform(f: GridField) -> GridField:
    """Periodic Hilbert transform, multiplier -i*sgn(k); mean (and Nyquist) -> 0."""
    mult = -1j * np.sign(f.grid.k_odd)
    return _wrap_spectral(f, mult * _spectral(f))


def dealias(f: GridField) -> GridField:
    """Zero all modes with |k| > (2/3) k_max (two-thirds rule)."""
    return _wrap_spectral(f, f.grid.dealias_mask * _spectral(f))


def l2_norm(f: GridField) -> float:
    """Grid L2 norm sqrt(dx * sum |u_j|^2)."""
    if f.rep == PHYSICAL:
        return float(np.sqrt(f.grid.dx * np.sum(f.data**2)))
    return spectral_l2_norm(f)


def spectral_l2_norm(f: GridField) -> float:
    """sqrt(L * sum |u_hat_k|^2); equals l2_norm by Parseval."""
    coeffs = _spectral(f)
    return float(np.sqrt(f.grid.length * np.sum(np.abs(coeffs) ** 2)))


def sup_norm(f: GridField) -> float:
    g = f if f.rep == PHYSICAL else to_physical(f)
    return float(np.max(np.abs(g.data)))


def integral(f: GridField) -> float:
    """dx * sum, the spectrally exact quadrature on a periodic grid."""
    g = f if f.rep == PHYSICAL else to_physical(f)
    return float(f.grid.dx * np.sum(g.data))


def hsigma_norm(f: GridField, sigma: float) -> float:
    """Discrete Sobolev norm (sum_k (1+k^2)^sigma |u_hat_k|^2)^(1/2)."""
    coeffs = _spectral(f)
    weights = (1.0 + f.grid.k**2) ** sigma
    return float(np.sqrt(np.sum(weights * np.abs(coeffs) ** 2)))
