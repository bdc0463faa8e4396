"""Atomistic NEGF transport with an impact-ionization scattering self-energy."""

__version__ = "0.1.0"
