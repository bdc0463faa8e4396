from .fit import FitOptions, FitResult, ReferenceBands, band_objective, fit_tight_binding, read_reference_bands, write_reference_bands
from .model import (
    BandStructure,
    KPath,
    Orbital,
    TightBindingModel,
    band_structure,
    bloch_hamiltonian,
    build_hamiltonian_k,
    load_model,
    orbital_character,
    save_model,
)
from .templates import TightBindingTemplate, preset, slater_koster_template

__all__ = [
    "BandStructure", "FitOptions", "FitResult", "KPath", "Orbital", "ReferenceBands",
    "TightBindingModel", "TightBindingTemplate", "band_objective", "band_structure",
    "bloch_hamiltonian", "build_hamiltonian_k", "fit_tight_binding", "load_model",
    "orbital_character", "preset", "read_reference_bands", "save_model",
    "slater_koster_template", "write_reference_bands",
]
