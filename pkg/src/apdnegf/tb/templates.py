"""Linear parameterizations of tight-binding models and the shipped presets.

A template stores, for every named parameter, the list of matrix entries it
contributes to with a fixed geometric coefficient. Both onsite energies and
two-center Slater-Koster integrals enter H(k) linearly, which makes the
parameter derivatives of H(k) exact and cheap.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..errors import ValidationError
from .model import HoppingKey, Orbital, TightBindingModel, bloch_hamiltonian

Term = tuple[tuple[int, int, int], int, int, float]


@dataclass(frozen=True, eq=False)
class TightBindingTemplate:
    """Model family H(k; p) = sum_m p_m * dH/dp_m(k).

    ``terms[name]`` lists ``(R, i, j, coefficient)``; entries with R = 0 and
    i == j are onsite contributions. Every hopping entry must appear together
    with its conjugate partner so that each parameter alone is Hermitian.
    ``free`` is the mask of parameters the fitter may move.
    """

    lattice_vectors: np.ndarray
    orbitals: tuple[Orbital, ...]
    terms: Mapping[str, tuple[Term, ...]]
    values: Mapping[str, float]
    free: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        missing = set(self.terms) ^ set(self.values)
        if missing:
            raise ValidationError(f"terms and values disagree on parameters {sorted(missing)}")
        unknown = set(self.free) - set(self.terms)
        if unknown:
            raise ValidationError(f"free parameters {sorted(unknown)} are not template parameters")
        object.__setattr__(self, "free", frozenset(self.free))
        object.__setattr__(self, "values", {k: float(v) for k, v in self.values.items()})

    @property
    def names(self) -> list[str]:
        return sorted(self.terms)

    @property
    def free_names(self) -> list[str]:
        return sorted(self.free)

    def with_values(self, **updates: float) -> "TightBindingTemplate":
        vals = dict(self.values)
        for k, v in updates.items():
            if k not in vals:
                raise ValidationError(f"unknown parameter {k!r}")
            vals[k] = float(v)
        return TightBindingTemplate(self.lattice_vectors, self.orbitals, self.terms, vals, self.free)

    def with_free(self, names) -> "TightBindingTemplate":
        return TightBindingTemplate(
            self.lattice_vectors, self.orbitals, self.terms, self.values, frozenset(names)
        )

    def model(self, values: Mapping[str, float] | None = None) -> TightBindingModel:
        vals = dict(self.values)
        if values:
            vals.update(values)
        n = len(self.orbitals)
        onsite = np.zeros(n)
        hops: dict[HoppingKey, complex] = {}
        for name, terms in self.terms.items():
            p = vals[name]
            for R, i, j, c in terms:
                if R == (0, 0, 0) and i == j:
                    onsite[i] += p * c
                else:
                    hops[(R, i, j)] = hops.get((R, i, j), 0.0) + p * c
        hops = {k: v for k, v in hops.items() if v != 0.0}
        return TightBindingModel(self.lattice_vectors, self.orbitals, onsite, hops)

    def derivative(self, name: str, k_frac) -> np.ndarray:
        """dH(k)/dp for a single parameter (exact, H is linear in p)."""
        basis = TightBindingTemplate(self.lattice_vectors, self.orbitals, {name: self.terms[name]}, {name: 1.0})
        return bloch_hamiltonian(basis.model(), k_frac)


# ---------------------------------------------------------------------------
# Slater-Koster two-center construction


def _sk_element(a: str, b: str, d: np.ndarray) -> dict[str, float]:
    """Two-center matrix element <a|H|b> for bond vector d = r_b - r_a.

    Returns coefficients of the integrals ``v_sss, v_sps, v_pps, v_ppp``.
    """
    cos = d / np.linalg.norm(d)
    axis = {"px": 0, "py": 1, "pz": 2}
    if a == "s" and b == "s":
        return {"v_sss": 1.0}
    if a == "s":
        return {"v_sps": cos[axis[b]]}
    if b == "s":
        return {"v_sps": -cos[axis[a]]}
    la, lb = cos[axis[a]], cos[axis[b]]
    same = 1.0 if a == b else 0.0
    return {"v_pps": la * lb, "v_ppp": same - la * lb}


def slater_koster_template(
    lattice_vectors,
    sites: Sequence[tuple[Sequence[float], Sequence[str]]],
    values: Mapping[str, float],
    cutoff: float,
    free: Sequence[str] = (),
    search: int = 2,
) -> TightBindingTemplate:
    """Nearest-neighbor s+p template for atoms at fractional ``sites``.

    Parameters are ``e_s``, ``e_p`` and the two-center integrals
    ``v_sss, v_sps, v_pps, v_ppp``; every bond of length <= ``cutoff``
    (Angstrom) gets the same integrals.
    """
    lat = np.asarray(lattice_vectors, dtype=float)
    orbitals: list[Orbital] = []
    owner: list[int] = []
    for s, (pos, labels) in enumerate(sites):
        for lab in labels:
            orbitals.append(Orbital(tuple(float(x) for x in pos), lab))
            owner.append(s)
    terms: dict[str, list[Term]] = {k: [] for k in ("e_s", "e_p", "v_sss", "v_sps", "v_pps", "v_ppp")}
    for i, orb in enumerate(orbitals):
        terms["e_s" if orb.label == "s" else "e_p"].append(((0, 0, 0), i, i, 1.0))

    rng = range(-search, search + 1)
    pos = np.array([np.asarray(p, dtype=float) for p, _ in sites])
    for sa, sb in itertools.product(range(len(sites)), repeat=2):
        for R in itertools.product(rng, rng, rng):
            d = (pos[sb] + np.array(R) - pos[sa]) @ lat
            dist = np.linalg.norm(d)
            if dist < 1e-9 or dist > cutoff + 1e-9:
                continue
            for i in (n for n, o in enumerate(owner) if o == sa):
                for j in (n for n, o in enumerate(owner) if o == sb):
                    for name, c in _sk_element(orbitals[i].label, orbitals[j].label, d).items():
                        if abs(c) > 1e-14:
                            terms[name].append((tuple(int(r) for r in R), i, j, float(c)))
    terms = {k: tuple(v) for k, v in terms.items() if v}
    vals = {k: float(values.get(k, 0.0)) for k in terms}
    return TightBindingTemplate(lat, tuple(orbitals), terms, vals, frozenset(f for f in free if f in terms))


# ---------------------------------------------------------------------------
# presets

_TRANSVERSE = 10.0


def chain_1d(eps: float = 0.0, t: float = -1.0, a: float = 1.0) -> TightBindingTemplate:
    """Single-orbital chain along x with dispersion eps + 2 t cos(k a)."""
    lat = np.diag([a, _TRANSVERSE, _TRANSVERSE])
    terms = {
        "eps": (((0, 0, 0), 0, 0, 1.0),),
        "t": (((1, 0, 0), 0, 0, 1.0), ((-1, 0, 0), 0, 0, 1.0)),
    }
    return TightBindingTemplate(lat, (Orbital((0.0, 0.0, 0.0), "s"),), terms, {"eps": eps, "t": t}, frozenset({"t"}))


def two_band_1d(
    e_c: float = 2.0,
    e_v: float = -2.0,
    t_c: float = -0.75,
    t_v: float = 0.75,
    v_sp: float = 0.25,
    a: float = 2.5,
) -> TightBindingTemplate:
    """Gapped two-band chain: an s-like conduction and px-like valence band.

    With the defaults the bands span [0.5, 3.5] and [-3.5, -0.5] eV, a
    1 eV direct gap centred on 0 eV at k = 0 and bandwidths larger than the
    gap, so electron-hole pair creation is kinematically allowed.
    """
    lat = np.diag([a, _TRANSVERSE, _TRANSVERSE])
    orbs = (Orbital((0.0, 0.0, 0.0), "s"), Orbital((0.0, 0.0, 0.0), "px"))
    xp, xm = (1, 0, 0), (-1, 0, 0)
    terms = {
        "e_c": (((0, 0, 0), 0, 0, 1.0),),
        "e_v": (((0, 0, 0), 1, 1, 1.0),),
        "t_c": ((xp, 0, 0, 1.0), (xm, 0, 0, 1.0)),
        "t_v": ((xp, 1, 1, 1.0), (xm, 1, 1, 1.0)),
        # s at the origin, px one cell away: +v along +x, -v along -x
        "v_sp": ((xp, 0, 1, 1.0), (xm, 1, 0, 1.0), (xm, 0, 1, -1.0), (xp, 1, 0, -1.0)),
    }
    vals = {"e_c": e_c, "e_v": e_v, "t_c": t_c, "t_v": t_v, "v_sp": v_sp}
    return TightBindingTemplate(lat, orbs, terms, vals, frozenset(vals))


# Two-center integrals from the sp3 silicon parameterization of Vogl et al.
# (V_ss = -8.30, V_sp = 5.7292, V_xx = 1.715, V_xy = 4.575 eV) converted to
# sigma/pi form; onsite values are shifted later so the gap is centred on 0.
SILICON_SP3 = {
    "e_s": -4.20,
    "e_p": 1.715,
    "v_sss": -8.30 / 4.0,
    "v_sps": 5.7292 * np.sqrt(3.0) / 4.0,
    "v_pps": (1.715 + 2.0 * 4.575) / 4.0,
    "v_ppp": (1.715 - 4.575) / 4.0,
}
SILICON_A = 5.431
SP = ("s", "px", "py", "pz")


def _centre_gap(template: TightBindingTemplate, nk: int = 6) -> TightBindingTemplate:
    g = (np.arange(nk) + 0.5) / nk - 0.5
    ks = np.array(list(itertools.product(g, g, g)) + [(0.0, 0.0, 0.0), (0.5, 0.0, 0.0), (0.5, 0.5, 0.0), (0.5, 0.5, 0.5)])
    ev = np.linalg.eigvalsh(bloch_hamiltonian(template.model(), ks))
    n_occ = sum(1 for o in template.orbitals if o.label == "s") * 2  # two electrons per s+p atom pair of bands
    vbm = ev[:, n_occ - 1].max()
    cbm = ev[:, n_occ].min()
    mid = 0.5 * (vbm + cbm)
    return template.with_values(e_s=template.values["e_s"] - mid, e_p=template.values["e_p"] - mid)


def silicon_primitive(free: Sequence[str] = ()) -> TightBindingTemplate:
    """Two-atom fcc diamond cell, s+p basis (8 orbitals)."""
    a = SILICON_A
    lat = 0.5 * a * np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]])
    sites = [((0.0, 0.0, 0.0), SP), ((0.25, 0.25, 0.25), SP)]
    t = slater_koster_template(lat, sites, SILICON_SP3, cutoff=a * np.sqrt(3) / 4 * 1.01, free=free)
    return _centre_gap(t)


def silicon_cubic(free: Sequence[str] = ()) -> TightBindingTemplate:
    """Eight-atom cubic diamond cell, s+p basis (32 orbitals).

    The cubic cell is the principal layer along x for device assembly.
    """
    a = SILICON_A
    fcc = [(0.0, 0.0, 0.0), (0.0, 0.5, 0.5), (0.5, 0.0, 0.5), (0.5, 0.5, 0.0)]
    sites = [(p, SP) for p in fcc] + [(tuple(x + 0.25 for x in p), SP) for p in fcc]
    t = slater_koster_template(np.eye(3) * a, sites, SILICON_SP3, cutoff=a * np.sqrt(3) / 4 * 1.01, free=free)
    return _centre_gap(t)


PRESETS = {
    "chain_1d": chain_1d,
    "two_band_1d": two_band_1d,
    "silicon_primitive": silicon_primitive,
    "silicon_cubic": silicon_cubic,
}

# high-symmetry points of the fcc primitive cell, fractional reciprocal coords
FCC_POINTS = {
    "L": (0.5, 0.5, 0.5),
    "G": (0.0, 0.0, 0.0),
    "X": (0.0, 0.5, 0.5),
    "W": (0.25, 0.75, 0.5),
    "K": (0.375, 0.75, 0.375),
    "U": (0.25, 0.625, 0.625),
}
CHAIN_POINTS = {"G": (0.0, 0.0, 0.0), "X": (0.5, 0.0, 0.0), "-X": (-0.5, 0.0, 0.0)}
CUBIC_POINTS = {"G": (0.0, 0.0, 0.0), "X": (0.5, 0.0, 0.0), "M": (0.5, 0.5, 0.0), "R": (0.5, 0.5, 0.5)}


def preset(name: str) -> TightBindingTemplate:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValidationError(f"unknown model preset {name!r}; choose from {sorted(PRESETS)}") from None
