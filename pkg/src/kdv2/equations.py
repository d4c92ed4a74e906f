"""Coefficient sets, named presets, and right-hand sides of the equation family.

Every equation handled here has the form

    du/dt = -( c_ux u_x + c_uux u u_x + c_u3x u_xxx + c_u2ux u^2 u_x
               + c_uxu2x u_x u_xx + c_uu3x u u_xxx + c_u5x u_xxxxx )

with each coefficient the product of an exact rational prefactor and fixed
powers of the two small parameters alpha and beta.  Prefactors are stored as
`fractions.Fraction` so that coefficient-level identities can be checked
exactly; float values are derived from them on demand.

Products in the nonlinear terms are evaluated pseudospectrally: the input is
projected onto the 2/3 band first, products are formed pointwise, and the
result is projected again.  With band-limited factors the cyclic FFT
convolution has no aliased image inside the kept band, so discrete products
obey the Leibniz rule there and the k=0 mode of every nonlinear term cancels
exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from types import MappingProxyType
from typing import Mapping

import numpy as np

from kdv2.spectral import (
    Grid,
    GridField,
    dealias,
    derivative,
    to_physical,
    to_spectral,
)

__all__ = [
    "CoefficientSet",
    "PRESETS",
    "preset",
    "kdv",
    "kdv2_full",
    "kdv2_moving",
    "kdv2a",
    "nl1",
    "linear_symbol",
    "linear_part",
    "nonlinear_part",
    "rhs",
    "soliton",
]

SLOTS = ("c_ux", "c_uux", "c_u3x", "c_u2ux", "c_uxu2x", "c_uu3x", "c_u5x")

# (power of alpha, power of beta) fixed per slot
SLOT_POWERS = {
    "c_ux": (0, 0),
    "c_uux": (1, 0),
    "c_u3x": (0, 1),
    "c_u2ux": (2, 0),
    "c_uxu2x": (1, 1),
    "c_uu3x": (1, 1),
    "c_u5x": (0, 2),
}


@dataclass(frozen=True)
class CoefficientSet:
    """Rational prefactors plus (alpha, beta); float coefficients derived."""

    prefactors: Mapping[str, Fraction]
    alpha: float = 1.0
    beta: float = 1.0
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        unknown = set(self.prefactors) - set(SLOTS)
        if unknown:
            raise ValueError(f"unknown coefficient slots: {sorted(unknown)}")
        clean = {
            slot: Fraction(value)
            for slot, value in self.prefactors.items()
            if Fraction(value) != 0
        }
        object.__setattr__(self, "prefactors", MappingProxyType(clean))

    def prefactor(self, slot: str) -> Fraction:
        if slot not in SLOT_POWERS:
            raise KeyError(f"unknown coefficient slot {slot!r}")
        return self.prefactors.get(slot, Fraction(0))

    def coefficient(self, slot: str) -> float:
        i, j = SLOT_POWERS[slot]
        return float(self.prefactor(slot)) * self.alpha**i * self.beta**j

    # float views of the seven slots
    @property
    def c_ux(self) -> float:
        return self.coefficient("c_ux")

    @property
    def c_uux(self) -> float:
        return self.coefficient("c_uux")

    @property
    def c_u3x(self) -> float:
        return self.coefficient("c_u3x")

    @property
    def c_u2ux(self) -> float:
        return self.coefficient("c_u2ux")

    @property
    def c_uxu2x(self) -> float:
        return self.coefficient("c_uxu2x")

    @property
    def c_uu3x(self) -> float:
        return self.coefficient("c_uu3x")

    @property
    def c_u5x(self) -> float:
        return self.coefficient("c_u5x")

    def float_coefficients(self) -> dict:
        return {slot: self.coefficient(slot) for slot in SLOTS}

    def with_prefactors(self, name: str = None, **changes) -> "CoefficientSet":
        """Copy with some rational prefactors replaced."""
        table = dict(self.prefactors)
        table.update({s: Fraction(v) for s, v in changes.items()})
        return CoefficientSet(table, self.alpha, self.beta, name or self.name)


def kdv(alpha: float = 1.0, beta: float = 1.0) -> CoefficientSet:
    """Transport + quadratic steepening + third-order dispersion."""
    return CoefficientSet(
        {"c_ux": 1, "c_uux": Fraction(3, 2), "c_u3x": Fraction(1, 6)},
        alpha,
        beta,
        name="kdv",
    )


def kdv2_moving(alpha: float = 1.0, beta: float = 1.0) -> CoefficientSet:
    """Second-order extension in a frame moving with the linear wave speed."""
    return CoefficientSet(
        {
            "c_uux": Fraction(3, 2),
            "c_u3x": Fraction(1, 6),
            "c_u2ux": Fraction(-3, 8),
            "c_uxu2x": Fraction(23, 24),
            "c_uu3x": Fraction(5, 12),
        },
        alpha,
        beta,
        name="kdv2-moving",
    )


def kdv2_full(alpha: float = 1.0, beta: float = 1.0) -> CoefficientSet:
    """Second-order extension in the lab frame, including fifth-order dispersion."""
    return kdv2_moving(alpha, beta).with_prefactors(
        name="kdv2-full", c_ux=1, c_u5x=Fraction(19, 360)
    )


def kdv2a(alpha: float = 1.0, beta: float = 1.0) -> CoefficientSet:
    """Integrable second-order form; the target of the near-identity map."""
    return CoefficientSet(
        {
            "c_uux": Fraction(3, 2),
            "c_u3x": Fraction(1, 6),
            "c_uxu2x": Fraction(5, 6),
            "c_uu3x": Fraction(5, 12),
        },
        alpha,
        beta,
        name="kdv2a",
    )


def nl1(alpha: float = 1.0, beta: float = 1.0) -> CoefficientSet:
    """Unit-coefficient model with both gradient-type nonlinearities."""
    return CoefficientSet(
        {"c_uux": 1, "c_u3x": 1, "c_uxu2x": 1, "c_uu3x": 1},
        alpha,
        beta,
        name="nl1",
    )


PRESETS = {
    "kdv": kdv,
    "kdv2-full": kdv2_full,
    "kdv2-moving": kdv2_moving,
    "kdv2a": kdv2a,
    "nl1": nl1,
}


def preset(name: str, alpha: float = 1.0, beta: float = 1.0) -> CoefficientSet:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    return PRESETS[name](alpha, beta)


def linear_symbol(coeffs: CoefficientSet, grid: Grid) -> np.ndarray:
    """Fourier symbol of the linear part, -i(c_ux k - c_u3x k^3 + c_u5x k^5).

    Built from real powers of the odd-convention wavenumbers, so the symbol
    is purely imaginary, odd in k, and zero at k=0 and Nyquist.
    """
    k = grid.k_odd
    return -1j * (coeffs.c_ux * k - coeffs.c_u3x * k**3 + coeffs.c_u5x * k**5)


def linear_part(f: GridField, coeffs: CoefficientSet) -> GridField:
    """-(c_ux u_x + c_u3x u_xxx + c_u5x u_xxxxx), applied as one multiplier."""
    spec = to_spectral(f) if f.rep == "physical" else f
    out = GridField(f.grid, linear_symbol(coeffs, f.grid) * spec.data, "spectral")
    return to_physical(out)


def nonlinear_part(f: GridField, coeffs: CoefficientSet) -> GridField:
    """Dealiased nonlinear terms, negated; zero field if no nonlinear slot is set."""
    grid = f.grid
    active = any(
        coeffs.prefactor(s) != 0 for s in ("c_uux", "c_u2ux", "c_uxu2x", "c_uu3x")
    )
    if not active:
        return GridField.zeros(grid)

    ud = dealias(f if f.rep == "physical" else to_physical(f))
    ux = derivative(ud)
    total = np.zeros(grid.n)
    if coeffs.prefactor("c_uux") != 0:
        total += coeffs.c_uux * (ud.data * ux.data)
    if coeffs.prefactor("c_u2ux") != 0:
        # inner projection keeps the squared factor band-limited
        usq = dealias(GridField(grid, ud.data * ud.data))
        total += coeffs.c_u2ux * (usq.data * ux.data)
    if coeffs.prefactor("c_uxu2x") != 0 or coeffs.prefactor("c_uu3x") != 0:
        u2x = derivative(ud, order=2)
        u3x = derivative(ud, order=3)
        if coeffs.prefactor("c_uxu2x") != 0:
            total += coeffs.c_uxu2x * (ux.data * u2x.data)
        if coeffs.prefactor("c_uu3x") != 0:
            total += coeffs.c_uu3x * (ud.data * u3x.data)
    return dealias(GridField(grid, -total))


def rhs(f: GridField, coeffs: CoefficientSet) -> GridField:
    """Full tendency, literally linear_part + nonlinear_part."""
    lin = linear_part(f, coeffs)
    non = nonlinear_part(f, coeffs)
    return GridField(f.grid, lin.data + non.data)


def soliton(grid: Grid, c: float = 1.0, x0: float = None) -> GridField:
    """Traveling-wave profile (c/2) sech^2(sqrt(c) (x - x0) / 2).

    Solves u_t + 6 u u_x + u_xxx = 0, translating at speed c.  The offset
    is wrapped into [-L/2, L/2); a warning is issued when the profile is
    too wide for the periodic box to approximate the real line.
    """
    if c <= 0:
        raise ValueError(f"speed must be positive, got {c}")
    if x0 is None:
        x0 = grid.length / 2.0
    width = 2.0 / np.sqrt(c)
    if width >= grid.length / 8.0:
        warnings.warn(
            f"soliton width {width:.3g} is large for box length {grid.length:.3g}; "
            "periodic images will overlap",
            stacklevel=2,
        )
    d = (grid.x - x0 + grid.length / 2.0) % grid.length - grid.length / 2.0
    u = 0.5 * c / np.cosh(0.5 * np.sqrt(c) * d) ** 2
    return GridField(grid, u)
