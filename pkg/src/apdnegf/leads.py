"""Semi-infinite contacts: Sancho-Rubio surface Green's functions, contact
self-energies, broadenings, occupations and lead density of states."""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Hashable, Sequence

import numpy as np
from scipy.special import expit

from .constants import KB_EV
from .errors import ConvergenceError, NumericalError, ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LeadModel:
    """Periodic semi-infinite lead.

    ``h01`` couples the surface cell to the next cell deeper in the lead;
    ``tau`` couples the device edge block to the lead surface, so that
    Sigma = tau g tau^dagger. ``shift`` is a rigid potential offset in eV
    applied as E -> E - shift.
    """

    h00: np.ndarray
    h01: np.ndarray
    tau: np.ndarray
    mu: float = 0.0
    temperature: float = 300.0
    shift: float = 0.0
    name: str = ""

    def __post_init__(self):
        h00 = np.asarray(self.h00, dtype=complex)
        h01 = np.asarray(self.h01, dtype=complex)
        tau = np.asarray(self.tau, dtype=complex)
        m = h00.shape[0]
        if h00.shape != (m, m) or h01.shape != (m, m):
            raise ValidationError("lead h00 and h01 must be square blocks of the same size")
        if tau.ndim != 2 or tau.shape[1] != m:
            raise ValidationError(f"tau must have {m} columns to match the lead block, got {tau.shape}")
        if np.linalg.norm(h00 - h00.conj().T) > 1e-12 * max(1.0, np.linalg.norm(h00)):
            raise ValidationError("lead h00 is not Hermitian")
        if self.temperature < 0:
            raise ValidationError("lead temperature must be >= 0")
        object.__setattr__(self, "h00", h00)
        object.__setattr__(self, "h01", h01)
        object.__setattr__(self, "tau", tau)


@dataclass(frozen=True)
class EtaSchedule:
    """Staged broadening for the decimation, from eta_initial down to eta_final."""

    eta_initial: float = 1e-2
    eta_final: float = 1e-4
    shrink: float = 0.1
    tolerance: float = 1e-14
    max_iterations: int = 200
    residual_tol: float = 1e-10

    def __post_init__(self):
        if not (self.eta_initial >= self.eta_final > 0):
            raise ValidationError("need eta_initial >= eta_final > 0")
        if not (0 < self.shrink < 1):
            raise ValidationError("shrink factor must lie in (0, 1)")

    def stages(self) -> list[float]:
        etas = [self.eta_initial]
        while etas[-1] * self.shrink > self.eta_final * (1 + 1e-9):
            etas.append(etas[-1] * self.shrink)
        if etas[-1] != self.eta_final:
            etas.append(self.eta_final)
        return etas


@dataclass(eq=False)
class DecimationResult:
    surface: np.ndarray  # (n_E, m, m)
    bulk: np.ndarray | None  # (n_E, m, m), infinite-lead Green's function
    residual: np.ndarray  # (...,) Frobenius residual of the surface fixed point
    stages: list[tuple[float, int, float]] = field(default_factory=list)  # (eta, iterations, max residual)


def surface_residual(g, h00, h01, z) -> np.ndarray:
    """|| (z - h00 - h01 g h01^dag) g - I ||_F for a stack of g."""
    g = np.asarray(g)
    m = h00.shape[0]
    eye = np.eye(m)
    z = np.asarray(z)[..., None, None]
    lhs = z * eye - h00 - h01 @ g @ h01.conj().T
    return np.linalg.norm(lhs @ g - eye, axis=(-2, -1))


def _sancho_rubio(h00, h01, z, tol, max_iter):
    """Batched decimation over complex energies ``z`` (shape (n,))."""
    m = h00.shape[0]
    n = z.shape[0]
    eye = np.eye(m)
    zI = z[:, None, None] * eye
    alpha = np.broadcast_to(h01, (n, m, m)).copy()
    beta = np.broadcast_to(h01.conj().T, (n, m, m)).copy()
    eps = np.broadcast_to(h00, (n, m, m)).astype(complex)
    eps_s = eps.copy()
    active = np.ones(n, dtype=bool)
    iterations = 0
    with np.errstate(all="ignore"):
        while np.any(active):
            if iterations >= max_iter:
                bad = np.flatnonzero(active)
                raise ConvergenceError(
                    f"surface decimation did not converge in {max_iter} iterations "
                    f"at E={z[bad[0]].real:.6f} eV (eta={z[bad[0]].imag:.1e}); "
                    f"coupling norm {np.linalg.norm(alpha[bad[0]]):.3e}"
                )
            idx = np.flatnonzero(active)
            try:
                g = np.linalg.inv(zI[idx] - eps[idx])
            except np.linalg.LinAlgError as exc:
                raise NumericalError(f"singular matrix in surface decimation near E={z[idx[0]].real:.6f} eV") from exc
            a, b = alpha[idx], beta[idx]
            agb = a @ g @ b
            bga = b @ g @ a
            eps_s[idx] += agb
            eps[idx] += agb + bga
            alpha[idx] = a @ g @ a
            beta[idx] = b @ g @ b
            iterations += 1
            if not (np.all(np.isfinite(eps[idx])) and np.all(np.isfinite(alpha[idx]))):
                raise NumericalError(f"non-finite values in surface decimation near E={z[idx[0]].real:.6f} eV")
            err = np.maximum(np.linalg.norm(alpha[idx], axis=(1, 2)), np.linalg.norm(beta[idx], axis=(1, 2)))
            active[idx[err < tol]] = False
    try:
        gs = np.linalg.inv(zI - eps_s)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular surface block after decimation") from exc
    return gs, iterations


def _newton_polish(g, h00, h01, z, tol, max_iter=30):
    """Newton refinement of surface fixed points, in place on the stack ``g``.

    Solves (z - h00 - h01 g h01^dag) g = I; the Jacobian is assembled in
    Kronecker form, so this is only used where decimation lost precision.
    """
    m = h00.shape[0]
    eye = np.eye(m)
    h01d = h01.conj().T
    for n in range(len(z)):
        gn = g[n]
        for _ in range(max_iter):
            M = z[n] * eye - h00 - h01 @ gn @ h01d
            F = M @ gn - eye
            if np.linalg.norm(F) < tol:
                break
            # vec(A X B) = (B^T kron A) vec(X), column-major
            L = np.kron(eye, M) - np.kron((h01d @ gn).T, h01)
            try:
                step = np.linalg.solve(L, -F.reshape(-1, order="F"))
            except np.linalg.LinAlgError:
                break
            gn = gn + step.reshape(m, m, order="F")
        g[n] = gn
    return g


def _surface_stages(h00, h01, e, schedule):
    stages = []
    prev = None
    for eta in schedule.stages():
        z = e + 1j * eta
        gs, its = _sancho_rubio(h00, h01, z, schedule.tolerance, schedule.max_iterations)
        res = surface_residual(gs, h00, h01, z)
        bad = res > schedule.residual_tol
        if prev is not None and np.any(bad):
            # continuation in eta: the previous stage seeds the refinement
            seed_res = surface_residual(prev[bad], h00, h01, z[bad])
            seeds = np.where((seed_res < res[bad])[:, None, None], prev[bad], gs[bad])
            gs[bad] = _newton_polish(seeds, h00, h01, z[bad], 0.1 * schedule.residual_tol)
            res = surface_residual(gs, h00, h01, z)
        elif np.any(bad):
            gs[bad] = _newton_polish(gs[bad], h00, h01, z[bad], 0.1 * schedule.residual_tol)
            res = surface_residual(gs, h00, h01, z)
        stages.append((eta, its, float(res.max())))
        log.debug("decimation stage eta=%.1e: %d iterations, max residual %.3e", eta, its, res.max())
        prev = gs
    worst = int(np.argmax(res))
    if res[worst] > schedule.residual_tol:
        log.warning(
            "surface Green's function residual %.3e at E=%.6f eV exceeds %.1e",
            res[worst], e[worst], schedule.residual_tol,
        )
    return gs, res, z, stages


def decimate(lead: LeadModel, energies, schedule: EtaSchedule = EtaSchedule(), bulk: bool = False) -> DecimationResult:
    """Staged Sancho-Rubio decimation at every energy in ``energies``.

    The first stage decimates at ``eta_initial``. Every later stage
    decimates at its smaller eta and, wherever the surface fixed-point
    residual misses ``residual_tol``, refines by Newton iteration seeded with
    the previous stage's solution. With ``bulk=True`` the Green's function
    of the infinite lead is assembled from both half-space surfaces.
    """
    e = np.atleast_1d(np.asarray(energies, dtype=float)) - lead.shift
    if not np.all(np.isfinite(e)):
        raise ValidationError("energies must be finite")
    gs, res, z, stages = _surface_stages(lead.h00, lead.h01, e, schedule)
    gb = None
    if bulk:
        h01d = lead.h01.conj().T
        g_other, _, _, _ = _surface_stages(lead.h00, h01d, e, schedule)
        eye = np.eye(lead.h00.shape[0])
        inv = z[:, None, None] * eye - lead.h00 - lead.h01 @ gs @ h01d - h01d @ g_other @ lead.h01
        try:
            gb = np.linalg.inv(inv)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular bulk lead Green's function") from exc
    return DecimationResult(gs, gb, res, stages)


def surface_green_function(lead: LeadModel, energy, schedule: EtaSchedule = EtaSchedule()) -> np.ndarray:
    """Retarded surface Green's function of ``lead``; vectorized over energy."""
    res = decimate(lead, energy, schedule)
    return res.surface[0] if np.ndim(energy) == 0 else res.surface


def contact_self_energy(g_s, tau, n_device: int | None = None, side: str = "left") -> np.ndarray:
    """Sigma = tau g_s tau^dagger, optionally embedded at the device edge.

    With ``n_device`` the result is an (n_device x n_device) matrix whose
    only non-zero block is the first (``side='left'``) or last
    (``side='right'``) edge block.
    """
    g_s = np.asarray(g_s)
    tau = np.asarray(tau)
    if tau.shape[-1] != g_s.shape[-2]:
        raise ValidationError(f"tau {tau.shape} does not match g_s {g_s.shape}")
    sigma = tau @ g_s @ tau.conj().T
    if n_device is None:
        return sigma
    m = tau.shape[0]
    if m > n_device:
        raise ValidationError("edge block larger than the device")
    full = np.zeros(sigma.shape[:-2] + (n_device, n_device), dtype=complex)
    if side == "left":
        full[..., :m, :m] = sigma
    elif side == "right":
        full[..., n_device - m:, n_device - m:] = sigma
    else:
        raise ValidationError(f"side must be 'left' or 'right', got {side!r}")
    return full


def broadening(sigma) -> np.ndarray:
    """Gamma = i (Sigma - Sigma^dagger)."""
    sigma = np.asarray(sigma)
    return 1j * (sigma - np.swapaxes(sigma.conj(), -1, -2))


def fermi_dirac(energy, mu: float, temperature: float):
    """Overflow-safe Fermi-Dirac occupation; T = 0 is a step with f(mu) = 1/2."""
    x = np.asarray(energy, dtype=float) - mu
    if temperature == 0:
        out = np.where(x < 0, 1.0, np.where(x > 0, 0.0, 0.5))
    else:
        out = expit(-x / (KB_EV * temperature))
    return out if np.ndim(out) else float(out)


def contact_sigma_lg(gamma, f) -> tuple[np.ndarray, np.ndarray]:
    """Lesser and greater contact self-energies i f Gamma and -i (1 - f) Gamma.

    ``f`` broadcasts against the leading (energy) axes of ``gamma``.
    """
    gamma = np.asarray(gamma)
    f = np.asarray(f, dtype=float)
    f = f.reshape(f.shape + (1,) * (gamma.ndim - f.ndim)) if f.ndim else f
    return 1j * f * gamma, -1j * (1.0 - f) * gamma


def lead_dos(
    leads: LeadModel | Sequence[LeadModel],
    energies,
    weights=None,
    schedule: EtaSchedule = EtaSchedule(),
    surface: bool = False,
) -> np.ndarray:
    """k-weighted lead density of states, states / eV per lead cell.

    By default this is the DOS of the infinite periodic lead,
    -1/pi sum_k w_k Im Tr G_bulk(E, k); ``surface=True`` uses the surface
    Green's function instead. ``leads`` holds one lead per k-point.
    """
    if isinstance(leads, LeadModel):
        leads = [leads]
    w = np.full(len(leads), 1.0 / len(leads)) if weights is None else np.asarray(weights, dtype=float)
    if len(w) != len(leads):
        raise ValidationError("one weight per lead k-point is required")
    dos = np.zeros(np.size(energies))
    for wk, lead in zip(w, leads):
        res = decimate(lead, energies, schedule, bulk=not surface)
        g = res.surface if surface else res.bulk
        dos += -wk / np.pi * np.trace(g, axis1=-2, axis2=-1).imag
    return dos


class SurfaceGFCache:
    """Thread-safe memo of surface Green's functions keyed by
    (lead id, energy index, k index). Entries are immutable once stored."""

    def __init__(self):
        self._data: dict[Hashable, np.ndarray] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self):
        return len(self._data)

    def get(self, key, compute: Callable[[], np.ndarray]) -> np.ndarray:
        with self._lock:
            if key in self._data:
                self.hits += 1
                return self._data[key]
        value = np.array(compute())
        value.setflags(write=False)
        with self._lock:
            self.misses += 1
            return self._data.setdefault(key, value)

    def put(self, key, value) -> np.ndarray:
        value = np.array(value)
        value.setflags(write=False)
        with self._lock:
            return self._data.setdefault(key, value)

    def lookup(self, key):
        with self._lock:
            return self._data.get(key)
