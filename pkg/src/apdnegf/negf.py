"""Energy-domain Dyson/Keldysh solver and coherent observables."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .constants import CURRENT_PREFACTOR
from .device import KMesh, LayeredDevice
from .errors import NumericalError, ValidationError
from .leads import (
    EtaSchedule,
    SurfaceGFCache,
    broadening,
    contact_self_energy,
    decimate,
    fermi_dirac,
)


def dagger(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a.conj(), -1, -2)


def trapezoid(y, x, axis=-1):
    return np.trapezoid(y, x, axis=axis)


@dataclass(frozen=True)
class EnergyGrid:
    """Uniform energy mesh; ``eta`` is the Dyson regularizer inside the device."""

    e_min: float
    e_max: float
    n: int
    eta: float = 1e-6

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("energy grid needs at least 2 points")
        if not self.e_max > self.e_min:
            raise ValidationError("energy grid needs e_max > e_min")
        if not self.eta > 0:
            raise ValidationError("eta must be positive")

    @property
    def energies(self) -> np.ndarray:
        return np.linspace(self.e_min, self.e_max, self.n)

    @property
    def de(self) -> float:
        return (self.e_max - self.e_min) / (self.n - 1)

    def index_of(self, energy: float) -> int:
        return int(round((energy - self.e_min) / self.de))


def check_uniform(energies, rtol: float = 1e-9) -> float:
    """Return the spacing of ``energies`` or raise if it is not uniform."""
    e = np.asarray(energies, dtype=float)
    if e.ndim != 1 or e.size < 2:
        raise ValidationError("energy grid must be a 1-D array with at least 2 points")
    d = np.diff(e)
    if np.any(np.abs(d - d[0]) > rtol * abs(d[0])) or d[0] <= 0:
        raise ValidationError("energy grid must be uniform and increasing")
    return float(d[0])


# ---------------------------------------------------------------------------
# core relations


def retarded_green(h, sigma, energy, eta: float) -> np.ndarray:
    """G = [(E + i eta) I - H - Sigma]^-1, batched over the leading axes.

    ``energy`` may be an array matching the leading axes of ``sigma``.
    """
    h = np.asarray(h)
    n = h.shape[-1]
    e = np.asarray(energy, dtype=float)
    z = (e + 1j * eta)[..., None, None]
    m = z * np.eye(n) - h - (0 if sigma is None else sigma)
    try:
        return np.linalg.inv(m)
    except np.linalg.LinAlgError:
        flat_e = np.broadcast_to(e, m.shape[:-2]).ravel()
        for k, mk in enumerate(m.reshape(-1, n, n)):
            if np.linalg.cond(mk) > 1e15:
                raise NumericalError(f"singular Dyson matrix at E={flat_e[k]:.6f} eV") from None
        raise


def keldysh_correlations(G, sigma_lesser, sigma_greater) -> tuple[np.ndarray, np.ndarray]:
    """G^< = G Sigma^< G^dagger and G^> = G Sigma^> G^dagger."""
    Gd = dagger(G)
    return G @ sigma_lesser @ Gd, G @ sigma_greater @ Gd


def spectral_function(G) -> np.ndarray:
    """A = i (G - G^dagger)."""
    return 1j * (G - dagger(G))


def transmission(gamma_l, G, gamma_r) -> np.ndarray:
    """T = Tr[Gamma_L G Gamma_R G^dagger], real part."""
    t = np.einsum("...ij,...jk,...kl,...li->...", gamma_l, G, gamma_r, dagger(G))
    return t.real


def landauer_current(T, f_l, f_r, energies, spin_degeneracy: float = 2.0) -> float:
    """I = g_s (q/hbar) int dE/(2 pi) T(E) [f_L - f_R], amperes (trapezoid rule)."""
    e = np.asarray(energies, dtype=float)
    return float(spin_degeneracy * CURRENT_PREFACTOR * trapezoid(np.asarray(T) * (np.asarray(f_l) - np.asarray(f_r)), e))


def meir_wingreen_integrand(sigma_lesser, sigma_greater, g_lesser, g_greater) -> np.ndarray:
    """Tr[Sigma^< G^> - Sigma^> G^<] per energy, real part.

    The self-energies may cover only a diagonal block; the Green's
    functions must then be the matching block.
    """
    val = np.einsum("...ij,...ji->...", sigma_lesser, g_greater) - np.einsum(
        "...ij,...ji->...", sigma_greater, g_lesser
    )
    return val.real


def meir_wingreen_current(sigma_lesser, sigma_greater, g_lesser, g_greater, energies, spin_degeneracy: float = 2.0) -> float:
    """Terminal current into the device from one contact (or scattering source), amperes."""
    integrand = meir_wingreen_integrand(sigma_lesser, sigma_greater, g_lesser, g_greater)
    return float(spin_degeneracy * CURRENT_PREFACTOR * trapezoid(integrand, np.asarray(energies, dtype=float)))


# ---------------------------------------------------------------------------
# containers


@dataclass(eq=False)
class ContactTerms:
    """Contact self-energies for one k-point, stored as edge blocks (nE, m, m)."""

    sigma_l: np.ndarray
    sigma_r: np.ndarray
    f_l: np.ndarray
    f_r: np.ndarray

    @property
    def gamma_l(self):
        return broadening(self.sigma_l)

    @property
    def gamma_r(self):
        return broadening(self.sigma_r)

    def lesser_greater(self, side: str):
        gamma, f = (self.gamma_l, self.f_l) if side == "left" else (self.gamma_r, self.f_r)
        ff = f[:, None, None]
        return 1j * ff * gamma, -1j * (1.0 - ff) * gamma

    def embed(self, block: np.ndarray, n: int, side: str) -> np.ndarray:
        m = block.shape[-1]
        full = np.zeros(block.shape[:-2] + (n, n), dtype=complex)
        if side == "left":
            full[..., :m, :m] = block
        else:
            full[..., n - m:, n - m:] = block
        return full


def contact_terms(
    device: LayeredDevice,
    energies,
    schedule: EtaSchedule = EtaSchedule(),
    cache: SurfaceGFCache | None = None,
    k_index: int = 0,
) -> ContactTerms:
    """Lead self-energies and Fermi factors for one device slice."""
    e = np.asarray(energies, dtype=float)
    sig = {}
    for side, lead in (("left", device.left), ("right", device.right)):
        if cache is not None:
            key = (lead.name or side, k_index)
            missing = [i for i in range(len(e)) if cache.lookup(key + (i,)) is None]
            if missing:
                gs = decimate(lead, e[missing], schedule).surface
                for i, g in zip(missing, gs):
                    cache.put(key + (i,), g)
            g = np.stack([cache.lookup(key + (i,)) for i in range(len(e))])
        else:
            g = decimate(lead, e, schedule).surface
        sig[side] = contact_self_energy(g, lead.tau)
    f_l = np.asarray(fermi_dirac(e, device.left.mu, device.left.temperature), dtype=float)
    f_r = np.asarray(fermi_dirac(e, device.right.mu, device.right.temperature), dtype=float)
    return ContactTerms(sig["left"], sig["right"], np.atleast_1d(f_l), np.atleast_1d(f_r))


@dataclass(eq=False)
class GreenSet:
    """Green's functions indexed [k, E, i, j]."""

    G: np.ndarray
    lesser: np.ndarray
    greater: np.ndarray

    @property
    def spectral(self) -> np.ndarray:
        return spectral_function(self.G)


@dataclass(eq=False)
class SelfEnergySet:
    """Contact terms per k plus scattering self-energies indexed [k, E, i, j]."""

    contacts: list[ContactTerms]
    scatt_r: np.ndarray | None = None
    scatt_lesser: np.ndarray | None = None
    scatt_greater: np.ndarray | None = None


def solve_slice(
    device: LayeredDevice,
    energies,
    eta: float,
    contacts: ContactTerms,
    scatt_r=None,
    scatt_lesser=None,
    scatt_greater=None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dyson + Keldysh for one k-point with optional scattering self-energies.

    The Dyson regularizer eta acts as an empty bath (Sigma^> = -2 i eta),
    so G^> - G^< = -i A holds exactly.
    """
    n = device.size
    m = device.block_size
    e = np.asarray(energies, dtype=float)
    H = device.hamiltonian()
    sigma = np.zeros((len(e), n, n), dtype=complex)
    sigma[:, :m, :m] += contacts.sigma_l
    sigma[:, n - m:, n - m:] += contacts.sigma_r
    if scatt_r is not None:
        sigma = sigma + scatt_r
    G = retarded_green(H, sigma, e, eta)
    sl = np.zeros_like(sigma)
    sg = np.zeros_like(sigma)
    for side, sl_b in (("left", slice(0, m)), ("right", slice(n - m, n))):
        bl, bg = contacts.lesser_greater(side)
        sl[:, sl_b, sl_b] += bl
        sg[:, sl_b, sl_b] += bg
    if scatt_lesser is not None:
        sl = sl + scatt_lesser
    if scatt_greater is not None:
        sg = sg + scatt_greater
    idx = np.arange(n)
    sg[:, idx, idx] -= 2j * eta
    Gl, Gg = keldysh_correlations(G, sl, sg)
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(Gl)) and np.all(np.isfinite(Gg))):
        raise NumericalError("non-finite Green's function values")
    return G, Gl, Gg


def solve_coherent(
    devices: Sequence[LayeredDevice],
    grid: EnergyGrid,
    schedule: EtaSchedule = EtaSchedule(),
    cache: SurfaceGFCache | None = None,
    contacts: Sequence[ContactTerms] | None = None,
) -> tuple[GreenSet, SelfEnergySet]:
    """Coherent solve for every k-point slice of the device."""
    e = grid.energies
    if contacts is None:
        contacts = [contact_terms(d, e, schedule, cache, k) for k, d in enumerate(devices)]
    out = [solve_slice(d, e, grid.eta, c) for d, c in zip(devices, contacts)]
    greens = GreenSet(*(np.stack(x) for x in zip(*out)))
    return greens, SelfEnergySet(list(contacts))


# ---------------------------------------------------------------------------
# observables


@dataclass(eq=False)
class SpectralMaps:
    energies: np.ndarray
    ldos: np.ndarray  # (n_layers, nE), 1/eV per layer
    occupied: np.ndarray  # (n_layers, nE)
    density: np.ndarray  # (n_layers,) electrons per layer, spin included
    potential: np.ndarray | None = None
    positions: np.ndarray | None = None


def _layer_trace(M, n_layers, m):
    d = np.diagonal(M, axis1=-2, axis2=-1)  # (..., n)
    return d.reshape(d.shape[:-1] + (n_layers, m)).sum(axis=-1)


def spectral_maps(greens: GreenSet, kmesh: KMesh, grid: EnergyGrid, device: LayeredDevice) -> SpectralMaps:
    """Layer- and energy-resolved LDOS, occupied DOS and carrier density."""
    w = np.asarray(kmesh.weights)
    A = greens.spectral
    ldos = np.einsum("k,kel->le", w, _layer_trace(A, device.n_layers, device.block_size).real) / (2 * np.pi)
    occ = np.einsum("k,kel->le", w, _layer_trace(-1j * greens.lesser, device.n_layers, device.block_size).real) / (2 * np.pi)
    density = device.spin_degeneracy * trapezoid(occ, grid.energies, axis=-1)
    positions = np.arange(device.n_layers) * device.layer_thickness
    return SpectralMaps(grid.energies, ldos, occ, density, np.asarray(device.potential), positions)


def k_transmission(greens: GreenSet, selfen: SelfEnergySet, kmesh: KMesh, device: LayeredDevice) -> np.ndarray:
    """Mesh-weighted T(E)."""
    n, m = device.size, device.block_size
    total = 0.0
    for k, (c, wk) in enumerate(zip(selfen.contacts, kmesh.weights)):
        G_edge = greens.G[k][:, :m, n - m:]
        total = total + wk * transmission(c.gamma_l, G_edge, c.gamma_r)
    return total


@dataclass
class TerminalCurrents:
    left: float
    right: float
    scattering: float = 0.0
    regularizer: float = 0.0
    landauer: float | None = None

    @property
    def total(self) -> float:
        return self.left + self.right + self.scattering + self.regularizer


def terminal_currents(
    greens: GreenSet,
    selfen: SelfEnergySet,
    kmesh: KMesh,
    grid: EnergyGrid,
    device: LayeredDevice,
    landauer: bool = True,
) -> TerminalCurrents:
    """Meir-Wingreen currents for both contacts, the scattering source and
    the eta regularizer (a pure sink: Sigma^< = 0, Sigma^> = -2 i eta)."""
    e = grid.energies
    n, m = device.size, device.block_size
    gs = device.spin_degeneracy
    left = right = scat = reg = 0.0
    lan = 0.0
    for k, (c, wk) in enumerate(zip(selfen.contacts, kmesh.weights)):
        Gl, Gg = greens.lesser[k], greens.greater[k]
        sl, sg = c.lesser_greater("left")
        left += wk * meir_wingreen_current(sl, sg, Gl[:, :m, :m], Gg[:, :m, :m], e, gs)
        sl, sg = c.lesser_greater("right")
        right += wk * meir_wingreen_current(sl, sg, Gl[:, n - m:, n - m:], Gg[:, n - m:, n - m:], e, gs)
        if selfen.scatt_lesser is not None:
            scat += wk * meir_wingreen_current(selfen.scatt_lesser[k], selfen.scatt_greater[k], Gl, Gg, e, gs)
        integrand = (2.0 * grid.eta * np.trace(Gl, axis1=-2, axis2=-1) * 1j).real
        reg += wk * gs * CURRENT_PREFACTOR * float(trapezoid(integrand, e))
        if landauer:
            T = transmission(c.gamma_l, greens.G[k][:, :m, n - m:], c.gamma_r)
            lan += wk * landauer_current(T, c.f_l, c.f_r, e, gs)
    return TerminalCurrents(left, right, scat, reg, lan if landauer else None)
