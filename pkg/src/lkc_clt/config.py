"""Sectioned TOML configuration with strict key checking."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import tomli
import tomli_w

from .covariance import CovarianceError, IsotropicCovariance
from .experiment import ExperimentPlan
from .fieldgen import GridError, GridSpec
from .geometry import LkcPolicy


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


@dataclass
class CovarianceSection:
    family: str = "gaussian"
    length_scale: float = 1.0
    smoothness: float = 3.5
    tail_exponent: float = 3.0


@dataclass
class GridSection:
    dimension: int = 2
    half_extent: float = 8.0
    spacing: float = 0.25
    max_points: int = 2**28


@dataclass
class ExperimentSection:
    thresholds: list[float] = field(default_factory=lambda: [1.0])
    schedule: list[float] = field(default_factory=lambda: [8.0])
    replications: int = 50
    base_seed: int = 0
    centering: str = "empirical"
    lkc_indices: list[int] = field(default_factory=list)  # empty means all
    convergence_tol: float = 0.15
    q_max: int = 40
    workers: int = 1
    override_hypotheses: bool = False


@dataclass
class GeometrySection:
    directions: int = 64
    offsets_per_direction: int = 64
    intermediate: str = "crofton"


@dataclass
class OutputSection:
    directory: str = "out"
    theory_thresholds: list[float] = field(default_factory=lambda: [0.0, 1.0, 2.0])


SECTIONS = {
    "covariance": CovarianceSection,
    "grid": GridSection,
    "experiment": ExperimentSection,
    "geometry": GeometrySection,
    "output": OutputSection,
}


@dataclass
class Config:
    covariance: CovarianceSection = field(default_factory=CovarianceSection)
    grid: GridSection = field(default_factory=GridSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    geometry: GeometrySection = field(default_factory=GeometrySection)
    output: OutputSection = field(default_factory=OutputSection)

    # ---- domain objects

    def model(self) -> IsotropicCovariance:
        c = self.covariance
        try:
            return IsotropicCovariance(c.family, c.length_scale, c.smoothness,
                                       c.tail_exponent, self.grid.dimension)
        except CovarianceError as exc:
            raise ConfigError(f"[covariance] {exc}") from exc

    def grid_spec(self, half_extent: float | None = None) -> GridSpec:
        g = self.grid
        try:
            spec = GridSpec(g.dimension, g.half_extent if half_extent is None else half_extent,
                            g.spacing, g.max_points)
            spec.check_resolution(self.covariance.length_scale)
        except GridError as exc:
            raise ConfigError(f"[grid] {exc}", "spacing") from exc
        return spec

    def policy(self, rng_seed: int = 0) -> LkcPolicy:
        g = self.geometry
        return LkcPolicy(g.directions, g.offsets_per_direction, rng_seed, g.intermediate)

    def plan(self, seed: int | None = None, override: bool | None = None) -> ExperimentPlan:
        e = self.experiment
        for T in e.schedule:
            self.grid_spec(T)
        try:
            return ExperimentPlan(
                self.model(), self.grid.dimension, tuple(e.thresholds), tuple(e.schedule),
                self.grid.spacing, e.replications, e.base_seed if seed is None else seed,
                self.policy(), e.centering, tuple(e.lkc_indices) or None,
                e.convergence_tol, q_max=e.q_max,
                override_hypotheses=e.override_hypotheses if override is None else override)
        except ValueError as exc:
            raise ConfigError(f"[experiment] {exc}") from exc

    # ---- (de)serialisation

    def to_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())


def _coerce(section: str, key: str, value, default):
    where = f"[{section}] {key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean", key)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer", key)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number", key)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string", key)
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be an array", key)
        kind = float if section != "experiment" or key != "lkc_indices" else int
        out = []
        for v in value:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and not isinstance(v, int)):
                raise ConfigError(f"{where} has a non-numeric entry {v!r}", key)
            out.append(kind(v))
        return out
    raise ConfigError(f"{where} has unsupported type", key)


def parse_config(text: str) -> Config:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from exc
    cfg = Config()
    for name, body in doc.items():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section [{name}]", name)
        if not isinstance(body, dict):
            raise ConfigError(f"[{name}] must be a table", name)
        section = getattr(cfg, name)
        fields = {f.name for f in dataclasses.fields(section)}
        for key, value in body.items():
            if key not in fields:
                raise ConfigError(f"unknown key {key!r} in [{name}]", key)
            setattr(section, key, _coerce(name, key, value, getattr(section, key)))
    return cfg


def load_config(path) -> Config:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
