"""Localized-orbital tight-binding models and their Bloch Hamiltonians."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..errors import NumericalError, ValidationError

ORBITAL_LABELS = ("s", "px", "py", "pz")
DEFAULT_CLASSES = {"s": ("s",), "p": ("px", "py", "pz")}

HoppingKey = tuple[tuple[int, int, int], int, int]


@dataclass(frozen=True)
class Orbital:
    position: tuple[float, float, float]  # fractional coordinates
    label: str


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TightBindingModel:
    """Tight-binding model with hoppings ``t = <i, 0|H|j, R>``.

    Only one of each conjugate pair ``(R, i, j)`` / ``(-R, j, i)`` needs to
    be listed; the partner is implied. Lattice vectors are rows, in Angstrom.
    """

    lattice_vectors: np.ndarray
    orbitals: tuple[Orbital, ...]
    onsite_energies: np.ndarray
    hoppings: Mapping[HoppingKey, complex] = field(default_factory=dict)

    def __post_init__(self):
        lat = np.array(self.lattice_vectors, dtype=float)
        if lat.shape != (3, 3) or abs(np.linalg.det(lat)) < 1e-12:
            raise ValidationError("lattice_vectors must be three independent 3-vectors")
        orbitals = tuple(
            o if isinstance(o, Orbital) else Orbital(tuple(map(float, o[0])), str(o[1]))
            for o in self.orbitals
        )
        for n, orb in enumerate(orbitals):
            if orb.label not in ORBITAL_LABELS:
                raise ValidationError(f"orbital {n}: label {orb.label!r} not in {ORBITAL_LABELS}")
        onsite = np.asarray(self.onsite_energies)
        if np.iscomplexobj(onsite):
            if np.any(onsite.imag != 0):
                raise ValidationError("onsite energies must be real")
            onsite = onsite.real
        onsite = np.array(onsite, dtype=float)
        if onsite.shape != (len(orbitals),):
            raise ValidationError(
                f"expected {len(orbitals)} onsite energies, got shape {onsite.shape}"
            )
        if not np.all(np.isfinite(onsite)):
            raise ValidationError("onsite energies must be finite")

        norb = len(orbitals)
        hops: dict[HoppingKey, complex] = {}
        for key, t in self.hoppings.items():
            R, i, j = key
            R = tuple(int(r) for r in R)
            if not (0 <= i < norb and 0 <= j < norb):
                raise ValidationError(f"hopping {key}: orbital index out of range")
            if R == (0, 0, 0) and i == j:
                raise ValidationError(f"hopping {key}: onsite terms belong in onsite_energies")
            t = complex(t)
            if not np.isfinite(t):
                raise ValidationError(f"hopping {key}: non-finite amplitude")
            hops[(R, int(i), int(j))] = t

        full = dict(hops)
        for (R, i, j), t in hops.items():
            partner = ((-R[0], -R[1], -R[2]), j, i)
            if partner in hops:
                if abs(hops[partner] - np.conj(t)) > 1e-12:
                    raise ValidationError(
                        f"non-Hermitian hopping table: entry (R={R}, i={i}, j={j}) = {t} "
                        f"but its partner (R={partner[0]}, i={j}, j={i}) = {hops[partner]}"
                    )
            else:
                full[partner] = np.conj(t)

        keys = sorted(full)
        object.__setattr__(self, "lattice_vectors", _freeze(lat))
        object.__setattr__(self, "orbitals", orbitals)
        object.__setattr__(self, "onsite_energies", _freeze(onsite))
        object.__setattr__(self, "hoppings", hops)
        object.__setattr__(
            self, "_R", _freeze(np.array([k[0] for k in keys], dtype=float).reshape(-1, 3))
        )
        object.__setattr__(self, "_ij", _freeze(np.array([k[1:] for k in keys], dtype=int).reshape(-1, 2)))
        object.__setattr__(self, "_t", _freeze(np.array([full[k] for k in keys], dtype=complex)))

    @property
    def n_orbitals(self) -> int:
        return len(self.orbitals)

    @property
    def labels(self) -> list[str]:
        return [o.label for o in self.orbitals]

    @property
    def reciprocal_vectors(self) -> np.ndarray:
        """Rows b_i with a_i . b_j = 2 pi delta_ij, in 1/Angstrom."""
        return 2.0 * np.pi * np.linalg.inv(self.lattice_vectors).T

    def to_fractional(self, k_cart) -> np.ndarray:
        return np.asarray(k_cart, dtype=float) @ self.lattice_vectors.T / (2.0 * np.pi)

    def to_cartesian(self, k_frac) -> np.ndarray:
        return np.asarray(k_frac, dtype=float) @ self.reciprocal_vectors

    def expanded_hoppings(self) -> list[tuple[tuple[int, int, int], int, int, complex]]:
        """All hopping entries including implied conjugate partners."""
        return [
            (tuple(int(r) for r in R), int(i), int(j), complex(t))
            for R, (i, j), t in zip(self._R, self._ij, self._t)
        ]

    def shifted(self, delta: float) -> "TightBindingModel":
        return TightBindingModel(
            self.lattice_vectors, self.orbitals, self.onsite_energies + delta, self.hoppings
        )


def bloch_hamiltonian(model: TightBindingModel, k_frac) -> np.ndarray:
    """H(k) for k in fractional reciprocal coordinates; accepts a stack of k."""
    k = np.asarray(k_frac, dtype=float)
    single = k.ndim == 1
    k = np.atleast_2d(k)
    n = model.n_orbitals
    H = np.zeros((k.shape[0], n, n), dtype=complex)
    H[:, np.arange(n), np.arange(n)] = model.onsite_energies
    if len(model._t):
        phases = np.exp(2j * np.pi * (k @ model._R.T)) * model._t  # (nk, nhop)
        flat = model._ij[:, 0] * n + model._ij[:, 1]
        np.add.at(H.reshape(k.shape[0], n * n), (slice(None), flat), phases)
    return H[0] if single else H


def build_hamiltonian_k(model: TightBindingModel, k) -> np.ndarray:
    """Bloch Hamiltonian at a Cartesian wave vector ``k`` (1/Angstrom).

    Uses the cell-periodic convention H(k) = sum_R exp(i k.R) T_R, so
    orbital positions inside the cell do not enter the phases.
    """
    return bloch_hamiltonian(model, model.to_fractional(k))


@dataclass(frozen=True)
class KPath:
    """Piecewise-linear path through reciprocal space (fractional coords)."""

    vertices: tuple[tuple[float, float, float], ...]
    points_per_segment: tuple[int, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.vertices) < 2:
            raise ValidationError("a k-path needs at least two vertices")
        if len(self.points_per_segment) != len(self.vertices) - 1:
            raise ValidationError("one point count per segment is required")
        if any(n < 2 for n in self.points_per_segment):
            raise ValidationError("each segment needs at least 2 points")
        if self.labels and len(self.labels) != len(self.vertices):
            raise ValidationError("labels must match vertices")

    @classmethod
    def from_labels(cls, points: Mapping[str, Sequence[float]], route: Sequence[str], n: int = 40):
        return cls(
            tuple(tuple(map(float, points[name])) for name in route),
            tuple([n] * (len(route) - 1)),
            tuple(route),
        )

    def sample(self):
        """Return (k_frac, segment index, fractional position along segment)."""
        ks, segs, ts = [], [], []
        for s, n in enumerate(self.points_per_segment):
            a = np.asarray(self.vertices[s])
            b = np.asarray(self.vertices[s + 1])
            t = np.linspace(0.0, 1.0, n)
            ks.append(a + t[:, None] * (b - a))
            segs.append(np.full(n, s))
            ts.append(t)
        return np.concatenate(ks), np.concatenate(segs), np.concatenate(ts)


@dataclass(frozen=True, eq=False)
class BandStructure:
    kpoints: np.ndarray  # (nk, 3) fractional
    segments: np.ndarray  # (nk,)
    kfrac: np.ndarray  # (nk,) position along segment
    eigenvalues: np.ndarray  # (nk, nbands), ascending
    weights: np.ndarray | None = None  # (nk, nbands, nclasses)
    classes: tuple[str, ...] = ()

    def gap(self, reference: float = 0.0) -> tuple[float, float]:
        """(valence maximum, conduction minimum) about ``reference``."""
        e = self.eigenvalues
        below = e[e <= reference]
        above = e[e > reference]
        if below.size == 0 or above.size == 0:
            raise ValidationError(f"no bands on both sides of {reference} eV")
        return float(below.max()), float(above.min())


def _eigh_stack(model, ks):
    H = bloch_hamiltonian(model, ks)
    try:
        return np.linalg.eigh(H)
    except np.linalg.LinAlgError:
        for k, h in zip(ks, H):
            try:
                np.linalg.eigh(h)
            except np.linalg.LinAlgError as exc:
                raise NumericalError(f"eigensolver failed at k={k}") from exc
        raise


def band_structure(model: TightBindingModel, path: KPath) -> BandStructure:
    ks, segs, ts = path.sample()
    evals, _ = _eigh_stack(model, ks)
    return BandStructure(ks, segs, ts, evals)


def orbital_character(
    model: TightBindingModel,
    path: KPath,
    classes: Mapping[str, Iterable[str]] | None = None,
) -> BandStructure:
    """Band structure with per-class weights sum_{i in c} |psi_i|^2."""
    classes = DEFAULT_CLASSES if classes is None else classes
    names = tuple(classes)
    masks = np.zeros((len(names), model.n_orbitals))
    for c, name in enumerate(names):
        masks[c] = [lab in tuple(classes[name]) for lab in model.labels]
    if np.any(masks.sum(axis=0) != 1):
        raise ValidationError("orbital classes must partition the orbital set")
    ks, segs, ts = path.sample()
    evals, evecs = _eigh_stack(model, ks)
    prob = np.abs(evecs) ** 2  # (nk, orb, band)
    weights = np.einsum("kob,co->kbc", prob, masks)
    return BandStructure(ks, segs, ts, evals, weights, names)


# ---------------------------------------------------------------------------
# model files


def save_model(model: TightBindingModel, path) -> None:
    lines = ["# tight-binding model", "[lattice]"]
    lines += [" ".join(repr(float(x)) for x in row) for row in model.lattice_vectors]
    lines += ["", "[orbitals]", "# fx fy fz label onsite_eV"]
    for orb, e in zip(model.orbitals, model.onsite_energies):
        lines.append(" ".join(repr(float(x)) for x in orb.position) + f" {orb.label} {float(e)!r}")
    lines += ["", "[hoppings]", "# R1 R2 R3 i j re_eV im_eV"]
    for (R, i, j), t in sorted(model.hoppings.items()):
        lines.append(f"{R[0]} {R[1]} {R[2]} {i} {j} {t.real!r} {t.imag!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path) -> TightBindingModel:
    """Parse the sectioned model format written by :func:`save_model`."""
    sections: dict[str, list[tuple[int, list[str]]]] = {}
    current = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if current not in ("lattice", "orbitals", "hoppings"):
                raise ValidationError(f"{path}:{lineno}: unknown section [{current}]")
            sections.setdefault(current, [])
            continue
        if current is None:
            raise ValidationError(f"{path}:{lineno}: data before any section")
        sections[current].append((lineno, line.split()))

    def bad(lineno, msg):
        return ValidationError(f"{path}:{lineno}: {msg}")

    lat = sections.get("lattice", [])
    if len(lat) != 3:
        raise ValidationError(f"{path}: [lattice] needs exactly 3 rows")
    try:
        lattice = [[float(x) for x in row] for _, row in lat]
    except ValueError as exc:
        raise bad(lat[0][0], f"bad lattice row: {exc}") from None
    orbitals, onsite = [], []
    for lineno, row in sections.get("orbitals", []):
        if len(row) != 5:
            raise bad(lineno, "orbital rows are 'fx fy fz label onsite_eV'")
        try:
            orbitals.append(Orbital(tuple(float(x) for x in row[:3]), row[3]))
            onsite.append(float(row[4]))
        except ValueError as exc:
            raise bad(lineno, str(exc)) from None
    hoppings = {}
    for lineno, row in sections.get("hoppings", []):
        if len(row) not in (6, 7):
            raise bad(lineno, "hopping rows are 'R1 R2 R3 i j re [im]'")
        try:
            R = tuple(int(x) for x in row[:3])
            i, j = int(row[3]), int(row[4])
            t = complex(float(row[5]), float(row[6]) if len(row) == 7 else 0.0)
        except ValueError as exc:
            raise bad(lineno, str(exc)) from None
        if (R, i, j) in hoppings:
            raise bad(lineno, f"duplicate hopping {(R, i, j)}")
        hoppings[(R, i, j)] = t
    return TightBindingModel(np.array(lattice), tuple(orbitals), np.array(onsite), hoppings)
