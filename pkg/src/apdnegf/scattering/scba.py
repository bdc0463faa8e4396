"""Self-consistent Born approximation loop."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..device import LayeredDevice
from ..errors import ConvergenceError, DivergenceError, NumericalError, ValidationError
from ..negf import ContactTerms, EnergyGrid, GreenSet, SelfEnergySet, solve_slice
from .hilbert import KK_CONVENTIONS, kk_completion
from .kernels import Kernel, hermitize, scattering_broadening

log = logging.getLogger(__name__)

OSCILLATION_WINDOW = 4
ALPHA_FLOOR = 1e-3
DIVERGENCE_FACTOR = 10.0
DIVERGENCE_SPAN = 20


@dataclass(eq=False)
class ScbaState:
    alpha: float
    iteration: int = 0
    history: list[float] = field(default_factory=list)
    log_rows: list[tuple[int, float, float, float]] = field(default_factory=list)
    sigma_lesser: np.ndarray | None = None
    sigma_greater: np.ndarray | None = None
    sigma_r: np.ndarray | None = None
    converged: bool = False
    outcome: str = "running"
    alpha_reductions: int = 0

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValidationError(f"mixing alpha must lie in (0, 1], got {self.alpha}")

    def record(self, residual: float, wall_ms: float) -> None:
        self.history.append(float(residual))
        self.log_rows.append((self.iteration, self.alpha, float(residual), float(wall_ms)))


@dataclass(eq=False)
class ScbaResult:
    greens: GreenSet
    selfen: SelfEnergySet
    state: ScbaState


def oscillating(history: Sequence[float], window: int = OSCILLATION_WINDOW) -> bool:
    """True when the last ``window`` first differences alternate in sign."""
    if len(history) < window + 1:
        return False
    d = np.diff(np.asarray(history[-(window + 1):]))
    s = np.sign(d)
    return bool(np.all(s != 0) and np.all(s[1:] == -s[:-1]))


def retarded_from_correlations(sigma_lesser, sigma_greater, axis: int = 1, convention: str = "full"):
    """Gamma_scatt from Sigma^<,> and its Kramers-Kronig retarded partner."""
    gamma = scattering_broadening(sigma_greater, sigma_lesser)
    return kk_completion(gamma, axis=axis, convention=convention)


def _solve_all(devices, contacts, grid, sr, sl, sg):
    e = grid.energies
    out = []
    for k, (d, c) in enumerate(zip(devices, contacts)):
        if sr is None:
            out.append(solve_slice(d, e, grid.eta, c))
        else:
            out.append(solve_slice(d, e, grid.eta, c, sr[k], sl[k], sg[k]))
    return GreenSet(*(np.stack(x) for x in zip(*out)))


def evaluate_kernels(kernels: Sequence[Kernel], g_lesser, g_greater):
    """Summed kernel output (Sigma^<, Sigma^>), Hermitian-symmetrized
    in the i Sigma^< / i Sigma^> sense."""
    sl = np.zeros_like(g_lesser)
    sg = np.zeros_like(g_greater)
    for kern in kernels:
        a, b = kern(g_lesser, g_greater)
        sl = sl + a
        sg = sg + b
    # i Sigma^<,> are Hermitian, so Sigma^<,> are anti-Hermitian
    sl = -1j * hermitize(1j * sl)
    sg = -1j * hermitize(1j * sg)
    if not (np.all(np.isfinite(sl)) and np.all(np.isfinite(sg))):
        raise NumericalError("scattering kernel returned non-finite values")
    return sl, sg


def scba_iterate(
    devices: Sequence[LayeredDevice],
    contacts: Sequence[ContactTerms],
    grid: EnergyGrid,
    kernels: Sequence[Kernel],
    alpha0: float = 0.1,
    residual_tol: float = 1e-4,
    max_iter: int = 10000,
    kk_convention: str = "full",
    adaptive: bool = True,
    deterministic: bool = False,
    callback: Callable[[ScbaState], None] | None = None,
) -> ScbaResult:
    """Fixed-point iteration over the scattering self-energies.

    Each step rebuilds Sigma^R from the current Sigma^<,> by Kramers-Kronig,
    solves Dyson/Keldysh for every k-point, evaluates the kernels and mixes
    Sigma <- (1 - alpha) Sigma + alpha Sigma_new. Converged when
    sum_{k,E} ||Sigma_new - Sigma||_F^2 (both components) < residual_tol;
    the returned Green's functions are consistent with the returned Sigma.
    """
    if kk_convention not in KK_CONVENTIONS:
        raise ValidationError(f"kk_convention must be one of {KK_CONVENTIONS}")
    if residual_tol <= 0 or max_iter < 1:
        raise ValidationError("residual_tol must be > 0 and max_iter >= 1")
    contacts = list(contacts)
    state = ScbaState(alpha=float(alpha0))
    nk, ne, n = len(devices), grid.n, devices[0].size

    if not kernels:
        greens = _solve_all(devices, contacts, grid, None, None, None)
        state.iteration = 1
        state.record(0.0, 0.0)
        state.converged, state.outcome = True, "converged"
        return ScbaResult(greens, SelfEnergySet(contacts), state)

    sl = np.zeros((nk, ne, n, n), dtype=complex)
    sg = np.zeros_like(sl)
    best = (np.inf, sl, sg)
    last_reduction = 0
    while True:
        t0 = time.perf_counter()
        state.iteration += 1
        sr = retarded_from_correlations(sl, sg, axis=1, convention=kk_convention)
        greens = _solve_all(devices, contacts, grid, sr, sl, sg)
        new_l, new_g = evaluate_kernels(kernels, greens.lesser, greens.greater)
        residual = float(np.sum(np.abs(new_l - sl) ** 2) + np.sum(np.abs(new_g - sg) ** 2))
        if not np.isfinite(residual):
            raise NumericalError(f"non-finite SCBA residual at iteration {state.iteration}")
        wall = 0.0 if deterministic else 1e3 * (time.perf_counter() - t0)
        state.record(residual, wall)
        log.debug("scba iter %d alpha %.4g residual %.6e", state.iteration, state.alpha, residual)
        if residual < best[0]:
            best = (residual, sl, sg)
        if callback is not None:
            callback(state)

        if residual < residual_tol:
            state.sigma_lesser, state.sigma_greater, state.sigma_r = sl, sg, sr
            state.converged, state.outcome = True, "converged"
            selfen = SelfEnergySet(contacts, sr, sl, sg)
            return ScbaResult(greens, selfen, state)

        h = state.history
        if len(h) > DIVERGENCE_SPAN and h[-1] > DIVERGENCE_FACTOR * h[-1 - DIVERGENCE_SPAN]:
            state.outcome = "diverged"
            _store_best(state, best, kk_convention)
            raise DivergenceError(
                f"SCBA residual grew from {h[-1 - DIVERGENCE_SPAN]:.3e} to {h[-1]:.3e} "
                f"over {DIVERGENCE_SPAN} iterations",
                history=list(h), state=state,
            )
        if state.iteration >= max_iter:
            state.outcome = "max_iterations"
            _store_best(state, best, kk_convention)
            raise ConvergenceError(
                f"SCBA did not converge in {max_iter} iterations (best residual {best[0]:.3e})",
                history=list(h), state=state,
            )
        if adaptive and state.alpha > ALPHA_FLOOR and len(h) - last_reduction > OSCILLATION_WINDOW and oscillating(h):
            state.alpha = max(ALPHA_FLOOR, 0.5 * state.alpha)
            state.alpha_reductions += 1
            last_reduction = len(h)
            log.info("scba residual oscillates; alpha reduced to %.4g", state.alpha)

        a = state.alpha
        sl = (1.0 - a) * sl + a * new_l
        sg = (1.0 - a) * sg + a * new_g


def _store_best(state: ScbaState, best, convention: str) -> None:
    _, sl, sg = best
    state.sigma_lesser, state.sigma_greater = sl, sg
    state.sigma_r = retarded_from_correlations(sl, sg, axis=1, convention=convention)


def fixed_point_change(result: ScbaResult, devices, grid: EnergyGrid, kernels: Sequence[Kernel]) -> float:
    """sum ||K[G(Sigma)] - Sigma||_F^2 for the returned state (un-mixed check)."""
    sl, sg = result.selfen.scatt_lesser, result.selfen.scatt_greater
    if sl is None:
        return 0.0
    new_l, new_g = evaluate_kernels(kernels, result.greens.lesser, result.greens.greater)
    return float(np.sum(np.abs(new_l - sl) ** 2) + np.sum(np.abs(new_g - sg) ** 2))
