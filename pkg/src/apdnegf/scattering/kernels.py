"""Scattering kernels: band projectors, impact ionization, optical generation.

Sign convention: the band-resolved weights are the positive semidefinite
matrices

    majority  G_b^maj = P_b (-i G^<) P_b   (occupied weight of band b)
    minority  G_b^min = P_b ( i G^>) P_b   (empty weight of band b)

and a kernel value K >= 0 enters as Sigma^< = i K_in, Sigma^> = -i K_out,
matching the contact convention Sigma^< = i f Gamma.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from ..errors import NumericalError, ValidationError
from .convolution import triple_convolution

BANDS = ("c", "v")
MODES = ("diagonal", "block")


@dataclass(frozen=True, eq=False)
class BandProjectors:
    """Per-layer conduction/valence projectors (same block for every layer)."""

    p_c: np.ndarray  # (m, m)
    p_v: np.ndarray  # (m, m)
    reference: float = 0.0

    def __getitem__(self, band: str) -> np.ndarray:
        return {"c": self.p_c, "v": self.p_v}[band]


def band_projectors(layer_block, reference: float = 0.0, gap_tol: float = 1e-3) -> BandProjectors:
    """Split the potential-free layer Hamiltonian at ``reference`` (eV).

    Eigenvectors with eigenvalues above the reference span the conduction
    projector, the rest the valence projector.
    """
    h = np.asarray(layer_block, dtype=complex)
    h = 0.5 * (h + h.conj().T)
    evals, evecs = np.linalg.eigh(h)
    if np.any(np.abs(evals - reference) < gap_tol):
        raise ValidationError(
            f"no spectral gap at the reference energy {reference} eV: layer eigenvalue "
            f"{evals[np.argmin(np.abs(evals - reference))]:.6f} eV lies within {gap_tol} eV"
        )
    up = evals > reference
    if up.all() or not up.any():
        raise ValidationError(f"all layer eigenvalues lie on one side of {reference} eV")
    vc, vv = evecs[:, up], evecs[:, ~up]
    return BandProjectors(vc @ vc.conj().T, vv @ vv.conj().T, reference)


def layer_blocks(M, n_layers: int, m: int) -> np.ndarray:
    """Diagonal layer blocks of (..., n, n) -> (..., n_layers, m, m)."""
    M = np.asarray(M)
    lead = M.shape[:-2]
    r = M.reshape(lead + (n_layers, m, n_layers, m))
    idx = np.arange(n_layers)
    blocks = r[..., idx, :, idx, :]  # advanced indexing moves layer axis first
    return np.moveaxis(blocks, 0, -3)


def embed_layer_blocks(blocks, n_layers: int, m: int) -> np.ndarray:
    """Inverse of :func:`layer_blocks` with zero off-diagonal blocks."""
    blocks = np.asarray(blocks)
    lead = blocks.shape[:-3]
    out = np.zeros(lead + (n_layers, m, n_layers, m), dtype=complex)
    for layer in range(n_layers):
        out[..., layer, :, layer, :] = blocks[..., layer, :, :]
    return out.reshape(lead + (n_layers * m, n_layers * m))


def band_resolved_components(g_lesser, g_greater, projectors: BandProjectors, n_layers: int) -> dict:
    """Majority and minority weights per band on the diagonal layer blocks.

    Returns ``{("c", "maj"): ..., ("c", "min"): ..., ("v", ...)...}`` with
    arrays shaped (..., n_layers, m, m).
    """
    m = projectors.p_c.shape[0]
    occ = layer_blocks(-1j * np.asarray(g_lesser), n_layers, m)
    emp = layer_blocks(1j * np.asarray(g_greater), n_layers, m)
    out = {}
    for b in BANDS:
        p = projectors[b]
        out[(b, "maj")] = p @ occ @ p
        out[(b, "min")] = p @ emp @ p
    return out


def _select(x, mode):
    if mode == "diagonal":
        return np.diagonal(x, axis1=-2, axis2=-1)
    return x


def _restore(x, mode):
    if mode == "diagonal":
        out = np.zeros(x.shape + (x.shape[-1],), dtype=complex)
        idx = np.arange(x.shape[-1])
        out[..., idx, idx] = x
        return out
    return x


def impact_ionization_rates(components: dict, d0, de: float, mode: str = "diagonal", axis: int = 0):
    """Positive in/out-scattering kernels (K_in, K_out) of impact ionization.

    K_out = D0 . sum_{b,b'} [G_b^min * G_b^maj G_b'^maj]
    K_in  = D0 . sum_{b,b'} [G_b'^maj * G_b^min G_b^min]

    where * is :func:`triple_convolution` along the energy ``axis`` and all
    products are element-wise over the layer blocks (only their diagonals in
    ``diagonal`` mode). The sum over b' is taken first since the
    convolution is linear in each operand.
    """
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}")
    sel = {k: _select(v, mode) for k, v in components.items()}
    maj_total = sel[("c", "maj")] + sel[("v", "maj")]
    k_out = 0
    k_in = 0
    for b in BANDS:
        k_out = k_out + triple_convolution(sel[(b, "min")], sel[(b, "maj")], maj_total, de, axis=axis)
        k_in = k_in + triple_convolution(maj_total, sel[(b, "min")], sel[(b, "min")], de, axis=axis)
    d0 = np.asarray(d0)
    if d0.ndim == 2 and mode == "diagonal":
        d0 = np.diagonal(d0)
    k_in = _restore(d0 * k_in, mode)
    k_out = _restore(d0 * k_out, mode)
    if not (np.all(np.isfinite(k_in)) and np.all(np.isfinite(k_out))):
        raise NumericalError("impact-ionization self-energy is not finite")
    return hermitize(k_in), hermitize(k_out)


def hermitize(m):
    return 0.5 * (m + np.swapaxes(np.conj(m), -1, -2))


def impact_ionization_sigma(components: dict, d0, de: float, n_layers: int, mode: str = "diagonal", axis: int = 0):
    """(Sigma_II^<, Sigma_II^>) on the full device, block diagonal in layers."""
    k_in, k_out = impact_ionization_rates(components, d0, de, mode, axis)
    m = k_in.shape[-1]
    return 1j * embed_layer_blocks(k_in, n_layers, m), -1j * embed_layer_blocks(k_out, n_layers, m)


def scattering_broadening(sigma_greater, sigma_lesser) -> np.ndarray:
    """Gamma_scatt = i (Sigma^> - Sigma^<), Hermitian-symmetrized."""
    return hermitize(1j * (np.asarray(sigma_greater) - np.asarray(sigma_lesser)))


def lorentzian(x, width: float):
    """Line shape normalized to int L dE / (2 pi) = 1."""
    return 2.0 * width / (np.asarray(x) ** 2 + width ** 2)


@dataclass(frozen=True)
class OpticalConfig:
    photon_energy: float  # eV
    strength: float  # eV
    layers: tuple[int, ...]
    width: float | None = None  # eV; default 4 grid steps
    valence_edge: float = 0.0  # eV, flat-band valence maximum

    def __post_init__(self):
        if self.strength < 0:
            raise ValidationError("optical strength must be >= 0")


def optical_generation_sigma(config: OpticalConfig, energies, potential, block_size: int):
    """Fixed optical source: electrons removed near E_v and injected at
    E_v + E_ph on the diagonal of the supported layers (band edges follow
    the local potential)."""
    e = np.asarray(energies, dtype=float)
    de = e[1] - e[0]
    width = 4 * de if config.width is None else config.width
    potential = np.asarray(potential, dtype=float)
    n_layers = len(potential)
    if any(not (0 <= l < n_layers) for l in config.layers):
        raise ValidationError(f"optical support {config.layers} outside the {n_layers}-layer device")
    diag_in = np.zeros((len(e), n_layers * block_size))
    diag_out = np.zeros_like(diag_in)
    for layer in config.layers:
        e_v = config.valence_edge + potential[layer]
        target = e_v + config.photon_energy
        if not (e[0] <= target <= e[-1]) or not (e[0] <= e_v <= e[-1]):
            raise ValidationError(
                f"optical transition {e_v:.3f} -> {target:.3f} eV in layer {layer} lies outside the grid"
            )
        sl = slice(layer * block_size, (layer + 1) * block_size)
        diag_in[:, sl] = (config.strength * lorentzian(e - target, width))[:, None]
        diag_out[:, sl] = (config.strength * lorentzian(e - e_v, width))[:, None]
    n = n_layers * block_size
    idx = np.arange(n)
    sl_, sg_ = np.zeros((len(e), n, n), complex), np.zeros((len(e), n, n), complex)
    sl_[:, idx, idx] = 1j * diag_in
    sg_[:, idx, idx] = -1j * diag_out
    return sl_, sg_


# ---------------------------------------------------------------------------
# kernel objects used by the SCBA loop


class Kernel(Protocol):
    name: str

    def __call__(self, g_lesser: np.ndarray, g_greater: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map G^<, G^> indexed [k, E, i, j] to Sigma^<, Sigma^> of the same shape."""


@dataclass(eq=False)
class ImpactIonizationKernel:
    d0: float
    projectors: Sequence[BandProjectors]  # one per k-point
    n_layers: int
    de: float
    mode: str = "diagonal"
    name: str = "impact_ionization"

    def __call__(self, g_lesser, g_greater):
        out_l, out_g = [], []
        for k, proj in enumerate(self.projectors):
            comps = band_resolved_components(g_lesser[k], g_greater[k], proj, self.n_layers)
            sl, sg = impact_ionization_sigma(comps, self.d0, self.de, self.n_layers, self.mode, axis=0)
            out_l.append(sl)
            out_g.append(sg)
        return np.stack(out_l), np.stack(out_g)


@dataclass(eq=False)
class OpticalKernel:
    """Static source; evaluates once and returns the same arrays every call."""

    config: OpticalConfig
    energies: np.ndarray
    potential: np.ndarray
    block_size: int
    n_k: int = 1
    name: str = "optical"
    _cache: tuple | None = field(default=None, repr=False)

    def __call__(self, g_lesser, g_greater):
        if self._cache is None:
            sl, sg = optical_generation_sigma(self.config, self.energies, self.potential, self.block_size)
            self._cache = (np.broadcast_to(sl, (self.n_k,) + sl.shape), np.broadcast_to(sg, (self.n_k,) + sg.shape))
        return self._cache
