"""Experiment configuration: a YAML key tree mapped onto typed sections."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigurationError
from .plan import MODES


@dataclass
class GeometryConfig:
    tx_center: list = field(default_factory=lambda: [0.0, 20.0])
    rx_center: list = field(default_factory=lambda: [0.0, -20.0])
    m_tx: int = 100
    m_rx: int = 100
    spacing: float | None = None
    carrier_hz: float = 50e9
    subcarrier_spacing_hz: float = 1e6
    n_subcarriers: int = 4
    roi_center: list = field(default_factory=lambda: [0.0, 0.0])
    roi_side: float = 36.0
    cells_per_side: int = 20
    array_angle_deg: float = 0.0


@dataclass
class SceneConfig:
    raster: str = "tu_berlin"
    psi: float = 0.99
    top_magnitude: float = 1.0
    bottom_magnitude: float = 0.3
    initial: str = "fixed"


@dataclass
class IlluminationConfig:
    patterns: list = field(default_factory=lambda: ["uniform", "tcm", "ipm"])
    total_power: float = 1.0
    tcm_unitary: str = "phase"
    tcm_seed: int = 0
    tcm_weighted: bool = False
    ipm_focus: Any = "quadrants"
    ipm_max_sca_iter: int = 30
    ipm_eps_rel: float = 1e-4
    ipm_method: str = "ipm"
    plan_dir: str | None = None


@dataclass
class ExperimentSection:
    snr_db: list = field(default_factory=lambda: [30.0, 5.0])
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    workers: int = 1


@dataclass
class SolverConfig:
    max_iter: int = 200
    tol: float = 1e-4
    project_ar1: bool = True


@dataclass
class MetricsConfig:
    ssim_sigma: float = 1.5
    ssim_window: int = 11
    ssim_k1: float = 0.01
    ssim_k2: float = 0.03


@dataclass
class OutputConfig:
    dir: str = "results"
    images: bool = True
    diagnostics: bool = True


SECTIONS = {
    "geometry": GeometryConfig,
    "scene": SceneConfig,
    "illumination": IlluminationConfig,
    "experiment": ExperimentSection,
    "solver": SolverConfig,
    "metrics": MetricsConfig,
    "output": OutputConfig,
}


@dataclass
class ExperimentConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    illumination: IlluminationConfig = field(default_factory=IlluminationConfig)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    solver: SolverConfig = field(default_factory=SolverConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _coerce(section: str, key: str, value, default):
    """Light type normalization so echoed configs re-parse identically."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigurationError(f"{section}.{key} must be true/false")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or int(value) != value:
            raise ConfigurationError(f"{section}.{key} must be an integer")
        return int(value)
    if isinstance(default, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"{section}.{key} must be a number") from None
    return value


def from_dict(data: dict | None) -> ExperimentConfig:
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigurationError("configuration root must be a mapping")
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown configuration sections: {sorted(unknown)}")
    built = {}
    for name, cls in SECTIONS.items():
        raw = data.get(name) or {}
        if not isinstance(raw, dict):
            raise ConfigurationError(f"section {name!r} must be a mapping")
        defaults = cls()
        known = {f.name for f in dataclasses.fields(cls)}
        bad = set(raw) - known
        if bad:
            raise ConfigurationError(f"unknown keys in {name}: {sorted(bad)}")
        values = {k: _coerce(name, k, v, getattr(defaults, k)) for k, v in raw.items()}
        built[name] = cls(**values)
    cfg = ExperimentConfig(**built)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    g = cfg.geometry
    for key in ("tx_center", "rx_center", "roi_center"):
        val = getattr(g, key)
        if not (isinstance(val, (list, tuple)) and len(val) == 2):
            raise ConfigurationError(f"geometry.{key} must be a 2-element list")
        setattr(g, key, [float(v) for v in val])
    for key in ("m_tx", "m_rx", "n_subcarriers", "cells_per_side"):
        if getattr(g, key) < 1:
            raise ConfigurationError(f"geometry.{key} must be >= 1")
    for key in ("carrier_hz", "subcarrier_spacing_hz", "roi_side"):
        if not getattr(g, key) > 0:
            raise ConfigurationError(f"geometry.{key} must be positive")
    if g.spacing is not None:
        g.spacing = float(g.spacing)
        if not g.spacing > 0:
            raise ConfigurationError("geometry.spacing must be positive")
    s = cfg.scene
    if not -1 < s.psi < 1:
        raise ConfigurationError("scene.psi must lie in (-1, 1)")
    if s.initial not in ("fixed", "gaussian"):
        raise ConfigurationError("scene.initial must be 'fixed' or 'gaussian'")
    il = cfg.illumination
    if not il.patterns or any(p not in MODES for p in il.patterns):
        raise ConfigurationError(f"illumination.patterns must be drawn from {MODES}")
    if not il.total_power > 0:
        raise ConfigurationError("illumination.total_power must be positive")
    if il.tcm_unitary not in ("svd", "phase", "haar"):
        raise ConfigurationError("illumination.tcm_unitary must be svd, phase or haar")
    if il.ipm_method not in ("ipm", "admm"):
        raise ConfigurationError("illumination.ipm_method must be ipm or admm")
    if il.ipm_focus != "quadrants":
        if not (isinstance(il.ipm_focus, list) and len(il.ipm_focus) == g.n_subcarriers):
            raise ConfigurationError(
                "illumination.ipm_focus must be 'quadrants' or one cell list per subcarrier"
            )
        q = g.cells_per_side**2
        for cells in il.ipm_focus:
            if not cells or any(int(c) != c or not 0 <= c < q for c in cells):
                raise ConfigurationError("focus cells must be non-empty lists of valid cell indices")
    e = cfg.experiment
    e.snr_db = [float(v) for v in e.snr_db]
    e.seeds = [int(v) for v in e.seeds]
    if not e.snr_db or not e.seeds:
        raise ConfigurationError("experiment.snr_db and experiment.seeds must be non-empty")
    if e.workers < 1:
        raise ConfigurationError("experiment.workers must be >= 1")
    if cfg.solver.max_iter < 1 or not cfg.solver.tol > 0:
        raise ConfigurationError("solver.max_iter must be >= 1 and solver.tol > 0")


def load_config(path=None) -> ExperimentConfig:
    if path is None:
        return from_dict({})
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse config {path}: {exc}") from exc
    return from_dict(data)
