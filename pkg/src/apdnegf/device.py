"""Layered device assembly: electrostatics, principal layers, transverse k-mesh."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import KB_EV
from .errors import PartitionError, ValidationError
from .leads import LeadModel
from .tb.model import TightBindingModel


@dataclass(frozen=True)
class DopingSpec:
    """Contact dopings in cm^-3; acceptors on the p+ (left) side."""

    n_a: float
    n_d: float
    n_i: float = 1.0e10
    temperature: float = 300.0

    def __post_init__(self):
        for name in ("n_a", "n_d", "n_i", "temperature"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValidationError(f"DopingSpec.{name} must be positive, got {v}")

    @property
    def kt(self) -> float:
        return KB_EV * self.temperature


def built_in_potential(doping: DopingSpec) -> float:
    """V_bi = (k_B T / q) ln(N_A N_D / n_i^2), in volts."""
    return doping.kt * (math.log(doping.n_a / doping.n_i) + math.log(doping.n_d / doping.n_i))


def lead_offsets(doping: DopingSpec) -> tuple[float, float]:
    """Rigid band shifts (eV) of the p+ and n+ leads relative to the intrinsic channel."""
    return doping.kt * math.log(doping.n_a / doping.n_i), -doping.kt * math.log(doping.n_d / doping.n_i)


@dataclass(frozen=True, eq=False)
class PotentialProfile:
    potential: np.ndarray  # eV per layer
    positions: np.ndarray  # Angstrom
    bias: float  # V
    v_bi: float  # V

    @property
    def left(self) -> float:
        return float(self.potential[0])

    @property
    def right(self) -> float:
        return float(self.potential[-1])


def potential_profile(
    n_layers: int,
    offsets: tuple[float, float],
    bias: float = 0.0,
    layer_thickness: float = 1.0,
) -> PotentialProfile:
    """Linear ramp between the bias-shifted lead offsets.

    The bias is split symmetrically; a negative (reverse) bias raises the p
    side by |V|/2 and lowers the n side by |V|/2.
    """
    if n_layers < 2:
        raise ValidationError(f"potential profile needs at least 2 layers, got {n_layers}")
    du_p, du_n = offsets
    left = du_p - 0.5 * bias
    right = du_n + 0.5 * bias
    u = left + (right - left) * np.arange(n_layers) / (n_layers - 1)
    u.setflags(write=False)
    pos = np.arange(n_layers) * float(layer_thickness)
    pos.setflags(write=False)
    return PotentialProfile(u, pos, float(bias), float(du_p - du_n))


def contact_chemical_potentials(bias: float, offsets: tuple[float, float] = (0.0, 0.0)) -> tuple[float, float]:
    """(mu_p, mu_n) in eV: the equilibrium Fermi level (0 eV, the intrinsic
    mid-gap) shifted rigidly with each contact's share of the bias, plus an
    optional per-contact offset."""
    return -0.5 * bias + offsets[0], 0.5 * bias + offsets[1]


@dataclass(frozen=True, eq=False)
class KMesh:
    kpoints: np.ndarray  # (nk, 2) fractional transverse coordinates
    weights: np.ndarray
    dims: tuple[int, int]

    def __len__(self):
        return len(self.weights)


def kmesh(n1: int, n2: int, reduce_symmetry: bool = False) -> KMesh:
    """Monkhorst-Pack mesh over the transverse Brillouin zone.

    With ``reduce_symmetry`` the mesh is folded under time reversal
    (k and -k merged, weights summed).
    """
    if n1 < 1 or n2 < 1:
        raise ValidationError("k-mesh dimensions must be >= 1")
    g1 = (2 * np.arange(1, n1 + 1) - n1 - 1) / (2.0 * n1)
    g2 = (2 * np.arange(1, n2 + 1) - n2 - 1) / (2.0 * n2)
    ks = np.array([(a, b) for a in g1 for b in g2])
    w = np.full(len(ks), 1.0 / len(ks))
    if reduce_symmetry:
        reps: dict[tuple, int] = {}
        kept_k, kept_w = [], []
        for k, wk in zip(ks, w):
            key = tuple(np.round(k, 12) + 0.0)
            mkey = tuple(np.round(((-k + 0.5) % 1.0) - 0.5, 12) + 0.0)
            if mkey in reps:
                kept_w[reps[mkey]] += wk
            else:
                reps[key] = len(kept_k)
                kept_k.append(k)
                kept_w.append(wk)
        ks, w = np.array(kept_k), np.array(kept_w)
    return KMesh(ks, w, (n1, n2))


def principal_layer_blocks(model: TightBindingModel, k_perp=(0.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """(H00, H01) of one cell along the first lattice vector at transverse k.

    H01 couples cell n to cell n + 1. Raises PartitionError if any hopping
    reaches beyond the neighboring cell.
    """
    n = model.n_orbitals
    h00 = np.diag(model.onsite_energies).astype(complex)
    h01 = np.zeros((n, n), dtype=complex)
    k2, k3 = k_perp
    for R, i, j, t in model.expanded_hoppings():
        if abs(R[0]) > 1:
            raise PartitionError(
                f"hopping (R={R}, i={i}, j={j}) spans {abs(R[0])} cells along the transport axis; "
                "use a larger principal layer"
            )
        phase = np.exp(2j * np.pi * (k2 * R[1] + k3 * R[2]))
        if R[0] == 0:
            h00[i, j] += t * phase
        elif R[0] == 1:
            h01[i, j] += t * phase
    return h00, h01


@dataclass(frozen=True, eq=False)
class LayeredDevice:
    """Open device at one transverse momentum, block-tridiagonal in layers."""

    onsite: np.ndarray  # (n_layers, m, m), potential included
    coupling: np.ndarray  # (n_layers - 1, m, m), H_{i, i+1}
    left: LeadModel
    right: LeadModel
    potential: np.ndarray  # (n_layers,) eV
    bulk_onsite: np.ndarray  # (m, m) potential-free layer block
    k_perp: tuple[float, float] = (0.0, 0.0)
    layer_thickness: float = 1.0
    spin_degeneracy: float = 2.0

    @property
    def n_layers(self) -> int:
        return self.onsite.shape[0]

    @property
    def block_size(self) -> int:
        return self.onsite.shape[1]

    @property
    def size(self) -> int:
        return self.n_layers * self.block_size

    def hamiltonian(self) -> np.ndarray:
        m = self.block_size
        H = np.zeros((self.size, self.size), dtype=complex)
        for i in range(self.n_layers):
            H[i * m:(i + 1) * m, i * m:(i + 1) * m] = self.onsite[i]
        for i in range(self.n_layers - 1):
            H[i * m:(i + 1) * m, (i + 1) * m:(i + 2) * m] = self.coupling[i]
            H[(i + 1) * m:(i + 2) * m, i * m:(i + 1) * m] = self.coupling[i].conj().T
        return H

    def layer_slice(self, layer: int) -> slice:
        m = self.block_size
        return slice(layer * m, (layer + 1) * m)


def assemble_device(
    model: TightBindingModel,
    n_cells: int,
    profile: PotentialProfile,
    k_perp=(0.0, 0.0),
    *,
    temperature: float = 300.0,
    chemical_potentials: tuple[float, float] | None = None,
    spin_degeneracy: float = 2.0,
) -> LayeredDevice:
    """Build the device slice at ``k_perp`` with the p+ lead on the left.

    Lead blocks are the bulk blocks shifted rigidly by the profile's end
    values; ``chemical_potentials`` defaults to the symmetric bias split.
    """
    if n_cells < 1:
        raise ValidationError("device needs at least one cell")
    if len(profile.potential) != n_cells:
        raise ValidationError(
            f"profile has {len(profile.potential)} layers but the device has {n_cells} cells"
        )
    h00, h01 = principal_layer_blocks(model, k_perp)
    if not np.any(h01):
        raise PartitionError("no coupling between neighboring cells along the transport axis")
    m = model.n_orbitals
    eye = np.eye(m)
    onsite = np.stack([h00 + u * eye for u in profile.potential])
    coupling = np.broadcast_to(h01, (n_cells - 1, m, m)).copy()
    mu_l, mu_r = chemical_potentials if chemical_potentials is not None else contact_chemical_potentials(profile.bias)
    h01_dag = h01.conj().T
    left = LeadModel(h00, h01_dag, tau=h01_dag, mu=mu_l, temperature=temperature, shift=profile.left, name="p")
    right = LeadModel(h00, h01, tau=h01, mu=mu_r, temperature=temperature, shift=profile.right, name="n")
    for arr in (onsite, coupling):
        arr.setflags(write=False)
    return LayeredDevice(
        onsite, coupling, left, right, np.asarray(profile.potential), h00,
        tuple(float(x) for x in k_perp), float(profile.positions[1] - profile.positions[0]) if n_cells > 1 else 1.0,
        spin_degeneracy,
    )
