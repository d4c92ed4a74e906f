"""Additive spectral noise: diagonal covariance, counter-based increments.

The driving noise is diagonal in the Fourier basis with per-mode amplitude

    phi_k = amp * (1 + k^2)^(-decay/2)

(or a caller-supplied profile of |k|), optionally zeroed at k = 0 so the
spatial mean is conserved path-wise.

Increments come from a counter-based generator (Philox) keyed by
(seed, step_index); mode j always reads stream positions 2j and 2j+1.  A
draw is therefore a pure function of (seed, step, mode): paths replay
bit-identically without stored state, ensemble members and worker threads
cannot interfere, and grids of different size share the draws of their
common low modes, so refinement studies see the same noise path on every
grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from kdv2.equations import CoefficientSet, linear_symbol, nl1
from kdv2.spectral import Grid, GridField, l2_norm, sup_norm, to_physical
from kdv2.trajectory import Trajectory

__all__ = [
    "NoiseModel",
    "NoisePath",
    "sample_increment",
    "stochastic_convolution",
    "hs_norm",
]

RNG_ALGORITHM = "philox4x64 keyed by (seed, step_index)"


def _mode_normals(seed: int, step_index: int, count: int) -> np.ndarray:
    key = np.array([seed % 2**64, step_index % 2**64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key)).standard_normal(count)


@dataclass(frozen=True)
class NoiseModel:
    """Diagonal spectral covariance with power-law mode decay."""

    amp: float = 0.0
    decay: float = 2.0
    include_mean_mode: bool = False
    seed: int = 0
    # optional override: absolute per-mode amplitude as a function of |k|
    profile: Optional[Callable[[np.ndarray], np.ndarray]] = field(
        default=None, compare=False
    )

    rng_algorithm = RNG_ALGORITHM

    def __post_init__(self):
        if self.amp < 0:
            raise ValueError(f"amp must be nonnegative, got {self.amp}")

    @property
    def is_active(self) -> bool:
        return self.amp != 0.0 or self.profile is not None

    def phi(self, grid: Grid) -> np.ndarray:
        """Per-mode amplitudes phi_k over the full spectral layout."""
        if self.profile is not None:
            phi = np.asarray(self.profile(np.abs(grid.k)), dtype=float)
        else:
            phi = self.amp * (1.0 + grid.k**2) ** (-0.5 * self.decay)
        if not self.include_mean_mode:
            phi = phi.copy()
            phi[0] = 0.0
        return phi

    def sum_phi_squared(self, grid: Grid) -> float:
        return float(np.sum(self.phi(grid) ** 2))

    def increment(self, grid: Grid, dt: float, step_index: int) -> np.ndarray:
        """Raw spectral coefficients of one increment; see sample_increment."""
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        if not self.is_active:
            return np.zeros(grid.n, dtype=complex)
        half = grid.n // 2
        xi = _mode_normals(self.seed, step_index, 2 * (half + 1))
        phi = self.phi(grid)
        inc = np.zeros(grid.n, dtype=complex)
        inc[0] = phi[0] * np.sqrt(dt) * xi[0]
        inc[half] = phi[half] * np.sqrt(dt) * xi[2 * half]
        js = np.arange(1, half)
        vals = phi[js] * np.sqrt(0.5 * dt) * (xi[2 * js] + 1j * xi[2 * js + 1])
        inc[js] = vals
        inc[grid.n - js] = np.conj(vals)
        return inc


def sample_increment(
    model: NoiseModel, grid: Grid, dt: float, step_index: int
) -> GridField:
    """One Wiener increment as a spectral field, E|W_k|^2 = phi_k^2 dt.

    Hermitian-symmetric; mean and Nyquist modes are real with full per-mode
    variance, every other mode splits its variance evenly between real and
    imaginary parts.  Deterministic in (seed, step_index).
    """
    return GridField(grid, model.increment(grid, dt, step_index), "spectral")


def hs_norm(model: NoiseModel, sigma: float, grid: Grid) -> float:
    """Squared Hilbert-Schmidt norm sum_k (1+k^2)^sigma phi_k^2 on this grid.

    Stable under grid refinement iff decay > sigma + 1/2 in the power-law
    parameterization; divergence under doubling N signals a violated
    smoothing hypothesis.
    """
    weights = (1.0 + grid.k**2) ** sigma
    return float(np.sum(weights * model.phi(grid) ** 2))


@dataclass(frozen=True)
class NoisePath:
    """Pre-drawn increments for one realization at a fixed dt."""

    grid: Grid
    dt: float
    increments: np.ndarray  # (n_steps, n) complex spectral coefficients
    seed: int = 0
    first_step_index: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.increments.ndim != 2 or self.increments.shape[1] != self.grid.n:
            raise ValueError(
                f"increments shape {self.increments.shape} does not match grid"
            )

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    @classmethod
    def generate(
        cls,
        model: NoiseModel,
        grid: Grid,
        dt: float,
        n_steps: int,
        first_step_index: int = 0,
    ) -> "NoisePath":
        inc = np.zeros((n_steps, grid.n), dtype=complex)
        for step in range(n_steps):
            inc[step] = model.increment(grid, dt, first_step_index + step)
        return cls(grid, dt, inc, model.seed, first_step_index)

    def coarsened(self) -> "NoisePath":
        """Pairwise-summed increments: the same Brownian path at twice the dt."""
        if self.n_steps % 2 != 0:
            raise ValueError("need an even number of increments to coarsen")
        summed = self.increments[0::2] + self.increments[1::2]
        return NoisePath(self.grid, 2.0 * self.dt, summed, self.seed, self.first_step_index)


def stochastic_convolution(
    path: NoisePath, coeffs: CoefficientSet = None
) -> Trajectory:
    """Convolution of the linear group with the noise, sampled at step times.

    Left-point recursion W_(n+1) = E (W_n + dW_n), with E the one-step
    propagator of the linear symbol (unit dispersion by default).  This is
    exactly the noise accumulation of the mild Euler stepper, so both agree
    bit for bit on a shared path; and since |E| = 1 mode-wise, the per-mode
    law Var W_n(k) = phi_k^2 * (n dt) is exact for every dt.
    """
    if coeffs is None:
        coeffs = nl1()
    grid = path.grid
    phase = np.exp(linear_symbol(coeffs, grid) * path.dt)
    w = np.zeros(grid.n, dtype=complex)
    times = np.zeros(path.n_steps + 1)
    states = np.zeros((path.n_steps + 1, grid.n))
    for step in range(path.n_steps):
        w = phase * (w + path.increments[step])
        times[step + 1] = (step + 1) * path.dt
        states[step + 1] = to_physical(GridField(grid, w, "spectral")).data
    diag = {
        "mass": grid.dx * states.sum(axis=1),
        "l2": np.sqrt(grid.dx * (states**2).sum(axis=1)),
        "sup": np.abs(states).max(axis=1),
    }
    return Trajectory(grid, times, states, diag)
