"""Scattering kernels and the SCBA loop."""

from .convolution import check_grid, triple_convolution
from .hilbert import KK_CONVENTIONS, hilbert_transform, kk_completion
from .kernels import (
    BandProjectors,
    ImpactIonizationKernel,
    OpticalConfig,
    OpticalKernel,
    band_projectors,
    band_resolved_components,
    impact_ionization_rates,
    impact_ionization_sigma,
    lorentzian,
    optical_generation_sigma,
    scattering_broadening,
)
from .scba import ScbaResult, ScbaState, fixed_point_change, oscillating, retarded_from_correlations, scba_iterate

__all__ = [
    "BandProjectors", "ImpactIonizationKernel", "KK_CONVENTIONS", "OpticalConfig", "OpticalKernel",
    "ScbaResult", "ScbaState", "band_projectors", "band_resolved_components", "check_grid",
    "fixed_point_change", "hilbert_transform", "impact_ionization_rates", "impact_ionization_sigma",
    "kk_completion", "lorentzian", "optical_generation_sigma", "oscillating",
    "retarded_from_correlations", "scattering_broadening", "scba_iterate", "triple_convolution",
]
