"""Least-squares fitting of template parameters to reference band energies."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from ..errors import FitError, ValidationError
from .model import TightBindingModel, bloch_hamiltonian
from .templates import TightBindingTemplate

log = logging.getLogger(__name__)

REFERENCE_HEADER = ["kx", "ky", "kz", "band_index", "energy_eV"]


@dataclass(frozen=True, eq=False)
class ReferenceBands:
    kpoints: np.ndarray  # (nk, 3) Cartesian, 1/Angstrom
    band_indices: np.ndarray  # (nb,) indices into the sorted model bands
    energies: np.ndarray  # (nk, nb)


def read_reference_bands(path) -> ReferenceBands:
    """Read ``kx,ky,kz,band_index,energy_eV`` rows (k in 1/Angstrom)."""
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != REFERENCE_HEADER:
            raise ValidationError(f"{path}: expected header {','.join(REFERENCE_HEADER)}")
        for n, row in enumerate(reader, 2):
            try:
                k = (float(row["kx"]), float(row["ky"]), float(row["kz"]))
                rows.setdefault(k, {})[int(row["band_index"])] = float(row["energy_eV"])
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"{path}:{n}: {exc}") from None
    if not rows:
        raise ValidationError(f"{path}: no reference data")
    bands = sorted(next(iter(rows.values())))
    for k, b in rows.items():
        if sorted(b) != bands:
            raise ValidationError(f"{path}: k-point {k} lists bands {sorted(b)}, expected {bands}")
    ks = np.array(list(rows))
    energies = np.array([[rows[k][b] for b in bands] for k in rows])
    return ReferenceBands(ks, np.array(bands), energies)


def write_reference_bands(path, model: TightBindingModel, kpoints_cart, bands=None) -> ReferenceBands:
    """Sample ``model`` at Cartesian k-points and write a reference file."""
    ks = np.atleast_2d(np.asarray(kpoints_cart, dtype=float))
    ev = np.linalg.eigvalsh(bloch_hamiltonian(model, model.to_fractional(ks)))
    bands = np.arange(model.n_orbitals) if bands is None else np.asarray(bands)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REFERENCE_HEADER)
        for k, e in zip(ks, ev):
            for b in bands:
                w.writerow([repr(float(k[0])), repr(float(k[1])), repr(float(k[2])), int(b), repr(float(e[b]))])
    return ReferenceBands(ks, bands, ev[:, bands])


@dataclass(frozen=True)
class FitOptions:
    """``window`` = (low, high) in eV; reference energies inside get weight 1,
    the rest ``outside_weight``. ``window=None`` weights every point equally."""

    window: tuple[float, float] | None = None
    outside_weight: float = 0.05
    tolerance: float = 1e-15
    max_iterations: int = 200
    degeneracy_tol: float = 1e-6


@dataclass(eq=False)
class FitResult:
    template: TightBindingTemplate
    objective: float
    trace: list[float] = field(default_factory=list)
    evaluations: int = 0
    converged: bool = False

    @property
    def model(self) -> TightBindingModel:
        return self.template.model()


def point_weights(reference: ReferenceBands, options: FitOptions) -> np.ndarray:
    if options.window is None:
        return np.ones_like(reference.energies)
    lo, hi = options.window
    inside = (reference.energies >= lo) & (reference.energies <= hi)
    return np.where(inside, 1.0, options.outside_weight)


def _check_compatible(reference: ReferenceBands, template: TightBindingTemplate):
    n = len(template.orbitals)
    if reference.band_indices.min() < 0 or reference.band_indices.max() >= n:
        raise ValidationError(
            f"reference bands {reference.band_indices.tolist()} incompatible with a {n}-band model"
        )


def _model_bands(template, values, kfrac, bands):
    return np.linalg.eigvalsh(bloch_hamiltonian(template.model(values), kfrac))[:, bands]


def band_objective(template: TightBindingTemplate, reference: ReferenceBands, options: FitOptions = FitOptions()) -> float:
    """Weighted sum of squared band errors in eV^2."""
    _check_compatible(reference, template)
    kfrac = template.model().to_fractional(reference.kpoints)
    e = _model_bands(template, None, kfrac, reference.band_indices)
    return float(np.sum(point_weights(reference, options) * (e - reference.energies) ** 2))


def _residual_and_jacobian(template, values, kfrac, reference, sqrt_w, names, degeneracy_tol):
    bands = reference.band_indices
    H = bloch_hamiltonian(template.model(values), kfrac)
    evals, evecs = np.linalg.eigh(H)
    r = sqrt_w * (evals[:, bands] - reference.energies)
    J = np.empty(r.shape + (len(names),))
    for m, name in enumerate(names):
        dH = template.derivative(name, kfrac)
        # first-order perturbation: d eps_n = <psi_n| dH |psi_n>
        d = np.einsum("kin,kij,kjn->kn", evecs.conj(), dH, evecs).real
        J[..., m] = d[:, bands]
    gaps = np.diff(evals, axis=1)
    lo, hi = max(bands.min() - 1, 0), bands.max()
    degenerate = np.any(gaps[:, lo:hi + 1] < degeneracy_tol, axis=1) if hi > lo else np.zeros(len(kfrac), bool)
    if np.any(degenerate):
        h = 1e-6
        kd = kfrac[degenerate]
        for m, name in enumerate(names):
            up = dict(values, **{name: values[name] + h})
            dn = dict(values, **{name: values[name] - h})
            J[degenerate, :, m] = (
                _model_bands(template, up, kd, bands) - _model_bands(template, dn, kd, bands)
            ) / (2 * h)
    J *= sqrt_w[..., None]
    return r.ravel(), J.reshape(-1, len(names))


def fit_tight_binding(
    reference: ReferenceBands,
    template: TightBindingTemplate,
    options: FitOptions = FitOptions(),
) -> FitResult:
    """Levenberg-Marquardt fit (scipy) of the template's free parameters.

    The Jacobian comes from first-order perturbation theory, with central
    differences at degenerate k-points. Bands are matched by sorted index
    at every k-point, so fits across band crossings may pick the wrong
    branch. ``trace`` holds the objective each time it improved.
    """
    _check_compatible(reference, template)
    names = template.free_names
    if not names:
        raise ValidationError("template has no free parameters")
    kfrac = template.model().to_fractional(reference.kpoints)
    sqrt_w = np.sqrt(point_weights(reference, options))
    base = dict(template.values)
    trace: list[float] = []
    last = {}

    def evaluate(x):
        if not np.all(np.isfinite(x)):
            raise FitError("parameter update became non-finite", trace)
        values = dict(base, **{n: float(v) for n, v in zip(names, x)})
        r, J = _residual_and_jacobian(template, values, kfrac, reference, sqrt_w, names, options.degeneracy_tol)
        obj = float(r @ r)
        if not np.isfinite(obj):
            raise FitError("objective is not finite", trace)
        if not trace or obj <= trace[-1]:
            trace.append(obj)
            log.debug("fit objective %.6e", obj)
        last["x"], last["J"] = np.array(x), J
        return r

    def jacobian(x):
        if "x" not in last or not np.array_equal(last["x"], x):
            evaluate(x)
        return last["J"]

    x0 = np.array([base[n] for n in names], dtype=float)
    n_res = reference.energies.size
    res = least_squares(
        evaluate, x0, jac=jacobian, method="lm" if n_res >= len(names) else "trf",
        xtol=options.tolerance, ftol=options.tolerance, gtol=options.tolerance,
        max_nfev=options.max_iterations * (len(names) + 1),
    )
    values = dict(base, **{n: float(v) for n, v in zip(names, res.x)})
    fitted = TightBindingTemplate(template.lattice_vectors, template.orbitals, template.terms, values, template.free)
    obj = float(res.fun @ res.fun)
    return FitResult(fitted, obj, trace, int(res.nfev), bool(res.success))
