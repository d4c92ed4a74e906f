"""Pseudospectral simulation of extended KdV-family equations with additive spectral noise."""

from kdv2.spectral import (
    Grid,
    GridField,
    SpectralMultiplier,
    airy_group,
    dealias,
    derivative,
    fractional_derivative,
    hilbert_transform,
    hsigma_norm,
    integral,
    l2_norm,
    spectral_l2_norm,
    sup_norm,
    to_physical,
    to_spectral,
)

__version__ = "0.1.0"
