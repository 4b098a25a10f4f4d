"""Pipeline configuration: YAML file -> dataclasses, with dotted-key overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional, Union

import yaml

from .errors import ConfigError


@dataclass
class PathsConfig:
    reference: Optional[str] = None
    reconstructed: Optional[str] = None
    baseline: Optional[str] = None
    anomalous: Optional[str] = None
    images: Optional[str] = None
    manifest: Optional[str] = None


@dataclass
class AlignSection:
    voxel_fraction: float = 0.02
    correspondence_fraction: float = 0.05
    icp_max_iterations: int = 50
    icp_epsilon: float = 1e-6
    icp_voxel_fraction: float = 0.004
    ransac_iterations: int = 20000
    ransac_seed: int = 42
    inlier_floor: float = 0.10
    eigen_ratio_min: float = 1.05


@dataclass
class RenderSection:
    n_views: int = 32
    width: int = 320
    height: int = 320
    fov_deg: float = 40.0
    radius_factor: float = 2.0
    point_radius_px: int = 1
    background: int = 0
    depth_test: bool = True
    dump_dir: Optional[str] = None


@dataclass
class MetricsSection:
    exact_threshold: int = 256
    epsilon: Optional[float] = None
    sinkhorn_max_points: int = 1024
    sinkhorn_max_iterations: int = 20000
    seed: int = 0


@dataclass
class AnomalySection:
    threshold: Optional[float] = None
    deviation_cutoff: Optional[float] = None
    cluster_radius: Optional[float] = None
    dump_ply: Optional[str] = None


@dataclass
class PerceptualSection:
    backend: str = "proxy"


@dataclass
class GroupingSection:
    yaw_bin: float = 0.5
    time_gap: float = 10.0


@dataclass
class ReportSection:
    # false: latency fields are written as null so repeated runs are byte-identical
    measure_latency: bool = True


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    align: AlignSection = field(default_factory=AlignSection)
    render: RenderSection = field(default_factory=RenderSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    anomaly: AnomalySection = field(default_factory=AnomalySection)
    perceptual: PerceptualSection = field(default_factory=PerceptualSection)
    grouping: GroupingSection = field(default_factory=GroupingSection)
    report: ReportSection = field(default_factory=ReportSection)
    seed: int = 42

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self, *required_paths: str) -> "PipelineConfig":
        """Check required paths exist and numeric parameters are in range."""
        for name in required_paths:
            value = getattr(self.paths, name)
            if not value:
                raise ConfigError(f"paths.{name}", "is required")
            if not Path(value).exists():
                raise ConfigError(f"paths.{name}", f"file not found: {value}")
        for name in ("images", "manifest"):
            value = getattr(self.paths, name)
            if value and not Path(value).exists():
                raise ConfigError(f"paths.{name}", f"not found: {value}")
        checks = [
            ("align.voxel_fraction", self.align.voxel_fraction > 0),
            ("align.correspondence_fraction", self.align.correspondence_fraction > 0),
            ("align.icp_max_iterations", self.align.icp_max_iterations >= 1),
            ("align.icp_epsilon", self.align.icp_epsilon > 0),
            ("align.icp_voxel_fraction", self.align.icp_voxel_fraction >= 0),
            ("align.ransac_iterations", self.align.ransac_iterations >= 1),
            ("align.inlier_floor", 0 <= self.align.inlier_floor <= 1),
            ("align.eigen_ratio_min", self.align.eigen_ratio_min >= 1),
            ("render.n_views", self.render.n_views >= 1),
            ("render.width", self.render.width >= 8),
            ("render.height", self.render.height >= 8),
            ("render.fov_deg", 0 < self.render.fov_deg < 180),
            ("render.radius_factor", self.render.radius_factor > 0),
            ("render.point_radius_px", 0 <= self.render.point_radius_px <= 32),
            ("render.background", 0 <= self.render.background <= 255),
            ("metrics.exact_threshold", self.metrics.exact_threshold >= 1),
            ("metrics.epsilon", self.metrics.epsilon is None or self.metrics.epsilon > 0),
            ("metrics.sinkhorn_max_points", self.metrics.sinkhorn_max_points >= 2),
            ("anomaly.threshold", self.anomaly.threshold is None or self.anomaly.threshold >= 0),
            ("anomaly.cluster_radius", self.anomaly.cluster_radius is None or self.anomaly.cluster_radius > 0),
            ("grouping.yaw_bin", self.grouping.yaw_bin > 0),
            ("grouping.time_gap", self.grouping.time_gap > 0),
        ]
        for key, ok in checks:
            if not ok:
                raise ConfigError(key, "out of range")
        backend = self.perceptual.backend
        if backend != "proxy" and not backend.startswith("external:"):
            raise ConfigError("perceptual.backend", "must be 'proxy' or 'external:<path>'")
        return self


def _coerce(value: Any, current: Any, key: str) -> Any:
    if isinstance(value, str) and not isinstance(current, str):
        value = yaml.safe_load(value)
    if isinstance(current, bool) and not isinstance(value, bool):
        raise ConfigError(key, f"expected a boolean, got {value!r}")
    if isinstance(current, int) and not isinstance(current, bool) and isinstance(value, float) and value.is_integer():
        value = int(value)
    if isinstance(current, float) and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    return value


def _merge(obj: Any, data: dict, prefix: str = "") -> None:
    known = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if key not in known:
            raise ConfigError(dotted, "unknown configuration key")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(dotted, "expected a mapping")
            _merge(current, value, dotted + ".")
        else:
            setattr(obj, key, _coerce(value, current, dotted))


def set_key(config: PipelineConfig, dotted: str, value: Any) -> None:
    """Assign ``value`` to a dotted key such as ``render.n_views``."""
    parts = dotted.split(".")
    nested: dict = {parts[-1]: value}
    for p in reversed(parts[:-1]):
        nested = {p: nested}
    _merge(config, nested)


def load_config(path: Union[str, Path, None] = None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults <- YAML file <- overrides (dotted keys)."""
    config = PipelineConfig()
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError("config", f"invalid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be a mapping")
        _merge(config, data)
    for key, value in (overrides or {}).items():
        if value is not None:
            set_key(config, key, value)
    return config
