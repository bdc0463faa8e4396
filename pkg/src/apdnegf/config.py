"""Simulation plan: INI file parsed and validated into typed sections.

Lists (bias values, stages, optical layers, band paths) are written as
comma-separated values. Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticError, field_validator, model_validator

from .errors import ValidationError

STAGES = ("bands", "leads", "transmission", "scba", "maps")


def _split(v):
    if isinstance(v, str):
        return [x.strip() for x in v.split(",") if x.strip()]
    return v


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSection(_Section):
    preset: Optional[str] = "two_band_1d"
    file: Optional[Path] = None
    band_path: list[str] = Field(default_factory=lambda: ["G", "X"])
    points_per_segment: int = Field(60, ge=2)

    _split_path = field_validator("band_path", mode="before")(_split)

    @model_validator(mode="after")
    def _source(self):
        if self.file is not None:
            if not self.file.is_file():
                raise ValueError(f"model file {self.file} does not exist")
        elif not self.preset:
            raise ValueError("either preset or file is required")
        if len(self.band_path) < 2:
            raise ValueError("band_path needs at least two points")
        return self


class DeviceSection(_Section):
    n_cells: int = Field(20, ge=2)
    n_a: float = Field(2.5e18, gt=0)
    n_d: float = Field(4.0e18, gt=0)
    n_i: float = Field(1e10, gt=0)
    temperature: float = Field(300.0, ge=0)
    bias: list[float] = Field(default_factory=lambda: [0.0])
    mu_offset_p: float = 0.0
    mu_offset_n: float = 0.0
    spin_degeneracy: float = Field(2.0, gt=0)

    _split_bias = field_validator("bias", mode="before")(_split)

    @field_validator("bias")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("bias list must not be empty")
        return v


class GridSection(_Section):
    e_min: float = -4.0
    e_max: float = 4.0
    n: int = Field(256, ge=8)
    eta: float = Field(1e-6, gt=0)

    @model_validator(mode="after")
    def _order(self):
        if not self.e_max > self.e_min:
            raise ValueError("e_max must exceed e_min")
        return self


class LeadsSection(_Section):
    eta: float = Field(1e-4, gt=0)
    eta_initial: float = Field(1e-2, gt=0)
    shrink: float = Field(0.1, gt=0, lt=1)
    tolerance: float = Field(1e-14, gt=0)
    max_iterations: int = Field(200, ge=1)
    surface_dos: bool = False

    @model_validator(mode="after")
    def _order(self):
        if self.eta_initial < self.eta:
            raise ValueError("eta_initial must be >= eta")
        return self


class KMeshSection(_Section):
    n1: int = Field(1, ge=1)
    n2: int = Field(1, ge=1)
    reduce_symmetry: bool = True


class ImpactSection(_Section):
    enabled: bool = True
    d0: float = Field(10.0, ge=0)
    mode: Literal["diagonal", "block"] = "diagonal"
    reference: float = 0.0


class OpticalSection(_Section):
    enabled: bool = False
    photon_energy: float = Field(1.5, gt=0)
    strength: float = Field(0.01, ge=0)
    layers: list[int] = Field(default_factory=list)
    width: Optional[float] = Field(None, gt=0)
    valence_edge: float = -0.5

    _split_layers = field_validator("layers", mode="before")(_split)

    @model_validator(mode="after")
    def _support(self):
        if self.enabled and not self.layers:
            raise ValueError("optical generation needs at least one layer")
        return self


class SolverSection(_Section):
    alpha: float = Field(0.1, gt=0, le=1)
    residual_tol: float = Field(1e-4, gt=0)
    max_iter: int = Field(10000, ge=1)
    kk_convention: Literal["full", "half"] = "full"
    adaptive: bool = True
    fail_fast: bool = False


class OutputSection(_Section):
    directory: Path = Path("output")
    stages: list[str] = Field(default_factory=lambda: list(STAGES))
    deterministic: bool = False
    preview_stride: int = Field(4, ge=1)

    _split_stages = field_validator("stages", mode="before")(_split)

    @field_validator("stages")
    @classmethod
    def _known(cls, v):
        bad = [s for s in v if s not in STAGES]
        if bad:
            raise ValueError(f"unknown stage(s) {bad}; choose from {list(STAGES)}")
        if not v:
            raise ValueError("at least one stage is required")
        return [s for s in STAGES if s in v]


class SimulationPlan(_Section):
    model: ModelSection = ModelSection()
    device: DeviceSection = DeviceSection()
    grid: GridSection = GridSection()
    leads: LeadsSection = LeadsSection()
    kmesh: KMeshSection = KMeshSection()
    impact: ImpactSection = ImpactSection()
    optical: OpticalSection = OpticalSection()
    solver: SolverSection = SolverSection()
    output: OutputSection = OutputSection()

    @model_validator(mode="after")
    def _cross(self):
        n = self.device.n_cells
        if any(not (0 <= l < n) for l in self.optical.layers):
            raise ValueError(f"optical.layers must lie in [0, {n - 1}]")
        return self


def plan_from_dict(data: dict) -> SimulationPlan:
    try:
        return SimulationPlan.model_validate(data)
    except PydanticError as exc:
        msgs = []
        for e in exc.errors():
            loc = ".".join(str(p) for p in e["loc"])
            text = "unknown key" if e["type"] == "extra_forbidden" else e["msg"]
            msgs.append(f"{loc}: {text}" if loc else text)
        raise ValidationError("invalid configuration: " + "; ".join(msgs)) from None


def parse_config_text(text: str, base_dir: Path | None = None) -> SimulationPlan:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"malformed configuration: {exc}") from None
    data = {sec: dict(cp[sec]) for sec in cp.sections()}
    if base_dir is not None and "file" in data.get("model", {}):
        p = Path(data["model"]["file"])
        data["model"]["file"] = str(p if p.is_absolute() else base_dir / p)
    return plan_from_dict(data)


def parse_config(path) -> SimulationPlan:
    """Read and validate an INI plan; relative model paths resolve against the file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        from .io import ArtifactIOError

        raise ArtifactIOError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return parse_config_text(text, path.parent)


def _ini_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ", ".join(_ini_value(x) for x in v)
    return str(v)


def serialize_plan(plan: SimulationPlan) -> str:
    """INI text that parses back to an equal plan."""
    lines = []
    for name in SimulationPlan.model_fields:
        section = getattr(plan, name)
        lines.append(f"[{name}]")
        for key in type(section).model_fields:
            v = getattr(section, key)
            if v is None:
                continue
            lines.append(f"{key} = {_ini_value(v)}")
        lines.append("")
    return "\n".join(lines)
