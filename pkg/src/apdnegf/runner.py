"""Batch orchestration: stages, bias sweeps and the run manifest."""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import STAGES, SimulationPlan
from .device import DopingSpec, KMesh, LayeredDevice, assemble_device, contact_chemical_potentials, kmesh, lead_offsets, potential_profile
from .errors import NegfError, ValidationError
from .io import _atomic_write, sha256_file, write_csv, write_tensor
from .leads import EtaSchedule, SurfaceGFCache, lead_dos
from .negf import EnergyGrid, GreenSet, SelfEnergySet, contact_terms, k_transmission, solve_slice, spectral_maps, terminal_currents
from .scattering import ImpactIonizationKernel, OpticalConfig, OpticalKernel, band_projectors, scba_iterate
from .tb import KPath, TightBindingModel, load_model, orbital_character, preset
from .tb.templates import CHAIN_POINTS, CUBIC_POINTS, FCC_POINTS

log = logging.getLogger(__name__)

POINT_TABLES = {
    "chain_1d": CHAIN_POINTS,
    "two_band_1d": CHAIN_POINTS,
    "silicon_primitive": FCC_POINTS,
    "silicon_cubic": CUBIC_POINTS,
}


def build_model(plan: SimulationPlan) -> TightBindingModel:
    if plan.model.file is not None:
        return load_model(plan.model.file)
    return preset(plan.model.preset).model()


def band_path(plan: SimulationPlan) -> KPath:
    table = CUBIC_POINTS if plan.model.file is not None else POINT_TABLES.get(plan.model.preset, CUBIC_POINTS)
    missing = [p for p in plan.model.band_path if p not in table]
    if missing:
        raise ValidationError(f"model.band_path: unknown point(s) {missing}; known {sorted(table)}")
    return KPath.from_labels(table, plan.model.band_path, plan.model.points_per_segment)


def bias_tag(bias: float) -> str:
    return f"V{bias:+.3f}"


@dataclass(eq=False)
class BiasSetup:
    """Everything needed to solve one bias point."""

    bias: float
    profile: object
    mesh: KMesh
    grid: EnergyGrid
    schedule: EtaSchedule
    devices: list[LayeredDevice]
    contacts: list


def setup_bias(plan: SimulationPlan, model: TightBindingModel, bias: float, threads: int = 1) -> BiasSetup:
    d = plan.device
    doping = DopingSpec(d.n_a, d.n_d, d.n_i, d.temperature)
    thickness = float(np.linalg.norm(model.lattice_vectors[0]))
    profile = potential_profile(d.n_cells, lead_offsets(doping), bias, thickness)
    mu = contact_chemical_potentials(bias, (d.mu_offset_p, d.mu_offset_n))
    mesh = kmesh(plan.kmesh.n1, plan.kmesh.n2, plan.kmesh.reduce_symmetry)
    devices = [
        assemble_device(model, d.n_cells, profile, tuple(k), temperature=d.temperature,
                        chemical_potentials=mu, spin_degeneracy=d.spin_degeneracy)
        for k in mesh.kpoints
    ]
    g = plan.grid
    grid = EnergyGrid(g.e_min, g.e_max, g.n, g.eta)
    lp = plan.leads
    schedule = EtaSchedule(lp.eta_initial, lp.eta, lp.shrink, lp.tolerance, lp.max_iterations)
    cache = SurfaceGFCache()
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        contacts = list(pool.map(lambda kd: contact_terms(kd[1], grid.energies, schedule, cache, kd[0]), enumerate(devices)))
    return BiasSetup(bias, profile, mesh, grid, schedule, devices, contacts)


def coherent_greens(setup: BiasSetup, threads: int = 1) -> tuple[GreenSet, SelfEnergySet]:
    e = setup.grid.energies
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        out = list(pool.map(lambda dc: solve_slice(dc[0], e, setup.grid.eta, dc[1]), zip(setup.devices, setup.contacts)))
    return GreenSet(*(np.stack(x) for x in zip(*out))), SelfEnergySet(list(setup.contacts))


def build_kernels(plan: SimulationPlan, setup: BiasSetup) -> list:
    kernels = []
    if plan.impact.enabled and plan.impact.d0 > 0:
        proj = [band_projectors(dev.bulk_onsite, plan.impact.reference) for dev in setup.devices]
        kernels.append(ImpactIonizationKernel(plan.impact.d0, proj, setup.devices[0].n_layers, setup.grid.de, plan.impact.mode))
    o = plan.optical
    if o.enabled and o.strength > 0:
        cfg = OpticalConfig(o.photon_energy, o.strength, tuple(o.layers), o.width, o.valence_edge)
        kernels.append(OpticalKernel(cfg, setup.grid.energies, setup.devices[0].potential, setup.devices[0].block_size, len(setup.devices)))
    return kernels


def run_scba(plan: SimulationPlan, setup: BiasSetup, deterministic: bool = False):
    s = plan.solver
    return scba_iterate(
        setup.devices, setup.contacts, setup.grid, build_kernels(plan, setup),
        alpha0=s.alpha, residual_tol=s.residual_tol, max_iter=s.max_iter,
        kk_convention=s.kk_convention, adaptive=s.adaptive, deterministic=deterministic,
    )


# ---------------------------------------------------------------------------
# manifest


@dataclass(eq=False)
class RunManifest:
    plan: dict
    deterministic: bool
    version: str = __version__
    started: str | None = None
    finished: str | None = None
    stages: list[dict] = field(default_factory=list)
    convergence: list[dict] = field(default_factory=list)
    artifacts: dict[str, str] = field(default_factory=dict)
    failed: list[dict] = field(default_factory=list)

    def add(self, path: Path, root: Path) -> None:
        self.artifacts[str(path.relative_to(root))] = sha256_file(path)

    def to_json(self) -> str:
        body = {
            "tool": "apdnegf",
            "version": self.version,
            "deterministic": self.deterministic,
            "started": self.started,
            "finished": self.finished,
            "plan": self.plan,
            "stages": self.stages,
            "convergence": self.convergence,
            "artifacts": dict(sorted(self.artifacts.items())),
            "failed": self.failed,
        }
        return json.dumps(body, indent=2, sort_keys=False) + "\n"

    def write(self, root: Path) -> Path:
        return _atomic_write(root / "manifest.json", self.to_json().encode())


def _now(deterministic: bool) -> str | None:
    return None if deterministic else datetime.now(timezone.utc).isoformat()


class _Stage:
    def __init__(self, manifest: RunManifest, name: str, deterministic: bool):
        self.m, self.name, self.det = manifest, name, deterministic

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, et, exc, tb):
        wall = 0.0 if self.det else round(1e3 * (time.perf_counter() - self.t0), 3)
        self.m.stages.append({"stage": self.name, "wall_ms": wall, "ok": exc is None})
        if exc is not None and isinstance(exc, NegfError):
            self.m.failed.append({"stage": self.name, "error": type(exc).__name__, "message": str(exc)})
            exc.stage = self.name
        return False


# ---------------------------------------------------------------------------
# stage bodies


def write_bands(plan, model, root, manifest):
    bs = orbital_character(model, band_path(plan))
    rows = []
    for ik in range(len(bs.kfrac)):
        for b in range(bs.eigenvalues.shape[1]):
            rows.append((int(bs.segments[ik]), bs.kfrac[ik], b, bs.eigenvalues[ik, b], *bs.weights[ik, b]))
    header = ["segment", "kfrac", "band", "energy_eV"] + [f"weight_{c}" for c in bs.classes]
    manifest.add(write_csv(root / "bands.csv", header, rows), root)
    return bs


def write_profile(setup, root, manifest, tag):
    p = setup.profile
    rows = [(i, p.positions[i], p.potential[i]) for i in range(len(p.potential))]
    manifest.add(write_csv(root / f"profile_{tag}.csv", ["layer", "position_A", "U_eV"], rows), root)


def write_lead_dos(plan, setup, root, manifest, tag):
    e = setup.grid.energies
    w = setup.mesh.weights
    dos_p = lead_dos([d.left for d in setup.devices], e, w, setup.schedule, surface=plan.leads.surface_dos)
    dos_n = lead_dos([d.right for d in setup.devices], e, w, setup.schedule, surface=plan.leads.surface_dos)
    manifest.add(write_csv(root / f"lead_dos_{tag}.csv", ["energy_eV", "dos_p", "dos_n"], zip(e, dos_p, dos_n)), root)
    return dos_p, dos_n


def write_transmission(setup, greens, selfen, root, manifest, tag):
    e = setup.grid.energies
    T = k_transmission(greens, selfen, setup.mesh, setup.devices[0])
    manifest.add(write_csv(root / f"transmission_{tag}.csv", ["energy_eV", "T"], zip(e, T)), root)
    cur = terminal_currents(greens, selfen, setup.mesh, setup.grid, setup.devices[0])
    manifest.add(write_csv(root / f"current_{tag}.csv", ["bias_V", "I_A"], [(setup.bias, cur.landauer)]), root)
    return T, cur


def write_convergence(state, root, manifest, tag):
    manifest.add(write_csv(root / f"convergence_{tag}.csv", ["iter", "alpha", "residual_eV2", "wall_ms"], state.log_rows), root)


def write_maps(plan, setup, greens, root, manifest, tag):
    maps = spectral_maps(greens, setup.mesh, setup.grid, setup.devices[0])
    manifest.add(write_tensor(maps.ldos, root / f"ldos_{tag}.negft"), root)
    manifest.add(write_tensor(maps.occupied, root / f"occupied_{tag}.negft"), root)
    g = setup.grid
    meta = {
        "axes": ["layer", "energy"],
        "units": "1/(eV layer)",
        "energy_eV": {"min": g.e_min, "max": g.e_max, "n": g.n},
        "position_A": [float(x) for x in maps.positions],
        "potential_eV": [float(x) for x in maps.potential],
        "bias_V": setup.bias,
    }
    manifest.add(_atomic_write(root / f"maps_{tag}.json", (json.dumps(meta, indent=2) + "\n").encode()), root)
    stride = plan.output.preview_stride
    rows = [
        (l, maps.positions[l], maps.energies[i], maps.ldos[l, i], maps.occupied[l, i])
        for l in range(maps.ldos.shape[0])
        for i in range(0, len(maps.energies), stride)
    ]
    manifest.add(write_csv(root / f"maps_preview_{tag}.csv", ["layer", "position_A", "energy_eV", "ldos", "occupied"], rows), root)
    return maps


def run_plan(plan: SimulationPlan, output_dir=None, threads: int = 1, deterministic: bool | None = None,
             stages=None) -> RunManifest:
    """Execute the requested stages for every bias in the plan.

    Stage order is fixed: bands, leads, transmission, scba, maps. Maps use
    the SCBA solution when that stage ran, otherwise the coherent one. The
    manifest is written even when a stage fails; the error is re-raised
    with a ``stage`` attribute.
    """
    det = plan.output.deterministic if deterministic is None else deterministic
    root = Path(output_dir if output_dir is not None else plan.output.directory)
    if stages is None:
        stages = plan.output.stages
    else:
        unknown = set(stages) - set(STAGES)
        if unknown:
            raise ValidationError(f"unknown stage(s) {sorted(unknown)}")
        stages = [s for s in STAGES if s in stages]
    manifest = RunManifest(plan.model_dump(mode="json"), det, started=_now(det))
    try:
        model = build_model(plan)
        if "bands" in stages:
            with _Stage(manifest, "bands", det):
                write_bands(plan, model, root, manifest)
        device_stages = [s for s in stages if s != "bands"]
        for bias in plan.device.bias if device_stages else []:
            tag = bias_tag(bias)
            with _Stage(manifest, f"setup[{tag}]", det):
                setup = setup_bias(plan, model, bias, threads)
                write_profile(setup, root, manifest, tag)
            if "leads" in stages:
                with _Stage(manifest, f"leads[{tag}]", det):
                    write_lead_dos(plan, setup, root, manifest, tag)
            greens = None
            if "transmission" in stages or ("maps" in stages and "scba" not in stages):
                with _Stage(manifest, f"transmission[{tag}]", det):
                    greens, selfen = coherent_greens(setup, threads)
                    if "transmission" in stages:
                        write_transmission(setup, greens, selfen, root, manifest, tag)
            if "scba" in stages:
                with _Stage(manifest, f"scba[{tag}]", det):
                    result = run_scba(plan, setup, det)
                    greens = result.greens
                    st = result.state
                    cur = terminal_currents(result.greens, result.selfen, setup.mesh, setup.grid, setup.devices[0])
                    manifest.convergence.append({
                        "bias_V": bias, "iterations": st.iteration, "alpha": st.alpha,
                        "residual_eV2": st.history[-1], "outcome": st.outcome,
                        "I_L": cur.left, "I_R": cur.right, "I_scattering": cur.scattering,
                        "I_regularizer": cur.regularizer, "I_landauer": cur.landauer,
                    })
                    write_convergence(st, root, manifest, tag)
            if "maps" in stages:
                with _Stage(manifest, f"maps[{tag}]", det):
                    write_maps(plan, setup, greens, root, manifest, tag)
    finally:
        manifest.finished = _now(det)
        manifest.write(root)
    return manifest


# ---------------------------------------------------------------------------
# bias sweep


@dataclass
class SweepPoint:
    bias: float
    left: float
    right: float
    landauer: float
    scattering: float = 0.0


def bias_sweep(plan: SimulationPlan, biases=None, *, scattering: bool = False, threads: int = 1,
               fail_fast: bool | None = None) -> tuple[list[SweepPoint], list[dict]]:
    """Terminal currents per bias; failures are collected unless fail-fast."""
    model = build_model(plan)
    fail_fast = plan.solver.fail_fast if fail_fast is None else fail_fast
    points, failures = [], []
    for bias in plan.device.bias if biases is None else biases:
        try:
            setup = setup_bias(plan, model, float(bias), threads)
            if scattering:
                res = run_scba(plan, setup, True)
                greens, selfen = res.greens, res.selfen
            else:
                greens, selfen = coherent_greens(setup, threads)
            cur = terminal_currents(greens, selfen, setup.mesh, setup.grid, setup.devices[0])
            points.append(SweepPoint(float(bias), cur.left, cur.right, cur.landauer, cur.scattering))
        except NegfError as exc:
            if fail_fast:
                raise
            log.warning("bias %g failed: %s", bias, exc)
            failures.append({"bias_V": float(bias), "error": type(exc).__name__, "message": str(exc)})
    return points, failures


def write_sweep(points, path) -> Path:
    rows = [(p.bias, p.left, p.right, p.landauer) for p in points]
    return write_csv(path, ["bias_V", "I_L", "I_R", "I_landauer"], rows)


def run_sweep(plan: SimulationPlan, output_dir=None, threads: int = 1, deterministic: bool | None = None,
              scattering: bool = False) -> RunManifest:
    det = plan.output.deterministic if deterministic is None else deterministic
    root = Path(output_dir if output_dir is not None else plan.output.directory)
    manifest = RunManifest(plan.model_dump(mode="json"), det, started=_now(det))
    try:
        with _Stage(manifest, "sweep", det):
            points, failures = bias_sweep(plan, scattering=scattering, threads=threads)
            manifest.failed.extend({"stage": "sweep", **f} for f in failures)
            manifest.add(write_sweep(points, root / "iv.csv"), root)
    finally:
        manifest.finished = _now(det)
        manifest.write(root)
    return manifest
