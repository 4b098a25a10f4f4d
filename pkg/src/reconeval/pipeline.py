"""Batch orchestration behind the command-line interface."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .align import AlignConfig, AlignmentResult, align_full
from .anomaly import AnomalyReport, detect_anomaly, deviation_cloud
from .config import PipelineConfig
from .core.io import load_image, load_pointcloud, save_image, save_pointcloud
from .core.types import PointCloud
from .errors import ConfigError, ReconEvalError
from .imgmetrics import aggregate_image_metrics, load_backend
from .pcmetrics import WassersteinConfig, compute_pc_metrics
from .render import Intrinsics, SplatConfig, make_camera_rig, render_pair
from .report import bench_csv, dumps
from .synth import DegradeSpec, SceneSpec, default_anomaly_box, degrade, generate_reference, inject_anomaly

logger = logging.getLogger(__name__)

LATENCY_SCOPE = "evaluation only (alignment, rendering, metrics); reconstruction time is external"


class StageError(ReconEvalError):
    """An error raised inside a named pipeline stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, Exception):
            raise StageError(self.name, exc) from exc
        return False


# ---------------------------------------------------------------------------
# capture manifests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CaptureRecord:
    path: str
    timestamp: float
    yaw: float
    position: Optional[tuple[float, float, float]] = None


def load_manifest(path: str | Path) -> list[CaptureRecord]:
    """Read a manifest CSV with columns path,timestamp,yaw[,x,y,z]."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"path", "timestamp", "yaw"} - set(reader.fieldnames or [])
        if missing:
            raise ConfigError("paths.manifest", f"missing columns {sorted(missing)}")
        for row in reader:
            yaw = float(row["yaw"])
            if not -math.pi <= yaw <= math.pi:
                raise ConfigError("paths.manifest", f"yaw {yaw} outside [-pi, pi]")
            pos = None
            if all(row.get(k) not in (None, "") for k in ("x", "y", "z")):
                pos = (float(row["x"]), float(row["y"]), float(row["z"]))
            records.append(CaptureRecord(row["path"], float(row["timestamp"]), yaw, pos))
    return records


def _yaw_jump(a: float, b: float) -> float:
    d = (b - a + math.pi) % (2 * math.pi) - math.pi
    return abs(d)


def group_images(manifest: Sequence[CaptureRecord], yaw_bin: float, time_gap: float) -> list[list[CaptureRecord]]:
    """Split a capture sequence into coherent runs.

    Records are sorted by timestamp (stable); a new group starts whenever the
    yaw changes by more than ``yaw_bin`` (shortest angular difference) or the
    time gap exceeds ``time_gap``.
    """
    if not manifest:
        raise ValueError("manifest is empty")
    ordered = sorted(manifest, key=lambda r: r.timestamp)
    groups = [[ordered[0]]]
    for prev, cur in zip(ordered, ordered[1:]):
        if _yaw_jump(prev.yaw, cur.yaw) > yaw_bin or cur.timestamp - prev.timestamp > time_gap:
            groups.append([cur])
        else:
            groups[-1].append(cur)
    return groups


def _count_images(config: PipelineConfig) -> tuple[int, int, int]:
    """(taken, used, groups). Unreadable or missing images count as taken but not used."""
    if not config.paths.manifest:
        return 0, 0, 0
    records = load_manifest(config.paths.manifest)
    base = Path(config.paths.images) if config.paths.images else Path(config.paths.manifest).parent
    usable = []
    for rec in records:
        p = Path(rec.path)
        p = p if p.is_absolute() else base / p
        try:
            load_image(p)
        except ReconEvalError as exc:
            logger.info("skipping image %s: %s", p, exc)
            continue
        usable.append(rec)
    n_groups = len(group_images(usable, config.grouping.yaw_bin, config.grouping.time_gap)) if usable else 0
    return len(records), len(usable), n_groups


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def align_config(config: PipelineConfig) -> AlignConfig:
    a = config.align
    return AlignConfig(
        voxel_fraction=a.voxel_fraction,
        correspondence_fraction=a.correspondence_fraction,
        icp_max_iterations=a.icp_max_iterations,
        icp_epsilon=a.icp_epsilon,
        icp_voxel_fraction=a.icp_voxel_fraction,
        ransac_iterations=a.ransac_iterations,
        ransac_seed=a.ransac_seed,
        inlier_floor=a.inlier_floor,
        eigen_ratio_min=a.eigen_ratio_min,
    )


def wasserstein_config(config: PipelineConfig) -> WassersteinConfig:
    m = config.metrics
    return WassersteinConfig(
        exact_threshold=m.exact_threshold,
        epsilon=m.epsilon,
        sinkhorn_max_points=m.sinkhorn_max_points,
        max_iterations=m.sinkhorn_max_iterations,
        seed=m.seed,
    )


def _file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _cloud_digest(cloud: PointCloud) -> str:
    return hashlib.sha256(np.ascontiguousarray(cloud.points).tobytes()).hexdigest()


def render_views(reference: PointCloud, reconstructed: PointCloud, config: PipelineConfig):
    r = config.render
    rig = make_camera_rig(reference, r.n_views, r.radius_factor, Intrinsics(r.width, r.height, r.fov_deg))
    splat = SplatConfig(r.point_radius_px, r.background, r.depth_test)
    return render_pair(reference, reconstructed, rig, splat)


def dump_views(pairs, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for k, (ref_img, rec_img) in enumerate(pairs):
        save_image(ref_img, out / f"view_{k:03d}_ref.png")
        save_image(rec_img, out / f"view_{k:03d}_rec.png")


@dataclass
class Evaluation:
    """In-memory result of one evaluation; ``report`` is the JSON-ready record."""

    report: dict
    aligned: PointCloud
    alignment: AlignmentResult


def evaluate_clouds(
    reference: PointCloud,
    reconstructed: PointCloud,
    config: PipelineConfig,
    *,
    inputs: dict | None = None,
    baseline_aligned: PointCloud | None = None,
) -> Evaluation:
    """Align, render, measure; optionally compare against an aligned baseline for anomaly detection."""
    t0 = time.perf_counter()
    with _Stage("align"):
        alignment = align_full(reference, reconstructed, align_config(config))
        aligned = alignment.transform.apply_cloud(reconstructed)
    with _Stage("render"):
        pairs = render_views(reference, aligned, config)
        if config.render.dump_dir:
            dump_views(pairs, config.render.dump_dir)
    with _Stage("image_metrics"):
        img = aggregate_image_metrics(pairs, load_backend(config.perceptual.backend))
    with _Stage("pc_metrics"):
        pcm = compute_pc_metrics(reference, aligned, wasserstein_config(config))
    anomaly: AnomalyReport | None = None
    if baseline_aligned is not None:
        with _Stage("anomaly"):
            anomaly = detect_anomaly(
                reference,
                baseline_aligned,
                aligned,
                config.anomaly.threshold,
                deviation_cutoff=config.anomaly.deviation_cutoff,
                cluster_radius=config.anomaly.cluster_radius,
                anomalous_metrics=pcm,
            )
            if config.anomaly.dump_ply:
                cloud = deviation_cloud(aligned, pcm.per_point_dist_rec_to_ref, anomaly.threshold)
                if cloud is not None:
                    save_pointcloud(cloud, config.anomaly.dump_ply)
    with _Stage("images"):
        taken, used, groups = _count_images(config)
    elapsed = time.perf_counter() - t0
    report = {
        "tool": "reconeval",
        "tool_version": __version__,
        "image_metrics": img.summary(),
        "pc_metrics": pcm.summary(),
        "alignment": alignment.summary(),
        "anomaly": anomaly.summary() if anomaly is not None else None,
        "evaluation_latency_seconds": max(elapsed, 1e-9) if config.report.measure_latency else None,
        "latency_scope": LATENCY_SCOPE,
        "n_images_taken": taken,
        "n_images_used": used,
        "image_groups": groups,
        "config": config.to_dict(),
        "inputs": inputs or {},
    }
    return Evaluation(report, aligned, alignment)


def _load(path: str, field: str) -> PointCloud:
    with _Stage(f"load:{field}"):
        return load_pointcloud(path)


def run_evaluate(config: PipelineConfig) -> dict:
    """Evaluate ``paths.reconstructed`` against ``paths.reference``; returns the report dict."""
    config.validate("reference", "reconstructed")
    reference = _load(config.paths.reference, "reference")
    reconstructed = _load(config.paths.reconstructed, "reconstructed")
    inputs = {
        "reference": {"path": config.paths.reference, "sha256": _file_digest(config.paths.reference), "points": len(reference)},
        "reconstructed": {"path": config.paths.reconstructed, "sha256": _file_digest(config.paths.reconstructed), "points": len(reconstructed)},
    }
    return evaluate_clouds(reference, reconstructed, config, inputs=inputs).report


def run_detect_anomaly(config: PipelineConfig) -> dict:
    """Align baseline and anomalous reconstructions independently, then difference their HD."""
    config.validate("reference", "baseline", "anomalous")
    reference = _load(config.paths.reference, "reference")
    baseline = _load(config.paths.baseline, "baseline")
    anomalous = _load(config.paths.anomalous, "anomalous")
    with _Stage("align:baseline"):
        base_aligned = align_full(reference, baseline, align_config(config))
    inputs = {
        name: {"path": getattr(config.paths, name), "sha256": _file_digest(getattr(config.paths, name)), "points": len(c)}
        for name, c in (("reference", reference), ("baseline", baseline), ("anomalous", anomalous))
    }
    result = evaluate_clouds(
        reference, anomalous, config, inputs=inputs,
        baseline_aligned=base_aligned.transform.apply_cloud(baseline),
    )
    return result.report


# ---------------------------------------------------------------------------
# synthetic scenes and the bench
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnomalySpec:
    protrusion: float = 0.04
    box_center: Optional[tuple[float, float, float]] = None
    box_extents: Optional[tuple[float, float, float]] = None
    seed: int = 1

    def box(self, scene: SceneSpec):
        center, extents = default_anomaly_box(scene, self.protrusion)
        if self.box_center is not None:
            center = np.asarray(self.box_center, dtype=float)
        if self.box_extents is not None:
            extents = np.asarray(self.box_extents, dtype=float)
        return center, extents

    def to_dict(self) -> dict:
        return {"protrusion": self.protrusion, "box_center": self.box_center, "box_extents": self.box_extents, "seed": self.seed}


DEFAULT_LADDER = (
    DegradeSpec(noise_sigma=0.0005, seed=11),
    DegradeSpec(noise_sigma=0.001, seed=12),
    DegradeSpec(noise_sigma=0.002, seed=13),
)


def degrade_label(spec: DegradeSpec) -> str:
    label = f"sigma={spec.noise_sigma:g}"
    if spec.dropout_fraction:
        label += f",drop={spec.dropout_fraction:g}"
    if spec.outlier_fraction:
        label += f",out={spec.outlier_fraction:g}"
    return label


def make_scene(scene: SceneSpec, spec: DegradeSpec, anomaly: AnomalySpec | None = None):
    """Reference, baseline reconstruction and (optionally) anomalous reconstruction for one ladder level.

    The anomalous scan uses an independent noise draw (seed + 1).
    """
    reference = generate_reference(scene)
    baseline = degrade(reference, spec)
    anomalous = None
    if anomaly is not None:
        center, extents = anomaly.box(scene)
        occluded = inject_anomaly(reference, center, extents, seed=anomaly.seed)
        anomalous = degrade(occluded, replace(spec, seed=spec.seed + 1))
    return reference, baseline, anomalous


def _bench_row(label: str, report: dict, anomaly: dict | None = None) -> dict:
    img, pcm = report["image_metrics"], report["pc_metrics"]
    row = {
        "label": label,
        "psnr_db": img["psnr_db"],
        "ssim_mean": img["ssim_mean"],
        "ssim_std": img["ssim_std"],
        "lpips": img["perceptual_mean"],
        "hd": pcm["hausdorff"],
        "wd": pcm["wasserstein"],
        "latency_s": report["evaluation_latency_seconds"],
    }
    if anomaly is not None:
        row.update(hd_b=anomaly["hd_baseline"], hd_a=anomaly["hd_anomalous"], delta_hd=anomaly["delta_hd"])
    return row


def run_synth_bench(
    scene: SceneSpec,
    degrade_ladder: Sequence[DegradeSpec],
    anomaly_spec: AnomalySpec | None,
    config: PipelineConfig,
    out_dir: str | Path | None = None,
) -> tuple[list[dict], str, dict[str, dict]]:
    """Evaluate every ladder level with and without the anomaly.

    Returns ``(rows, csv_text, reports)``; when ``out_dir`` is given, writes
    ``bench.csv`` and one ``report_<k>_<kind>.json`` per evaluation there.
    """
    rows: list[dict] = []
    reports: dict[str, dict] = {}
    for k, spec in enumerate(degrade_ladder):
        label = degrade_label(spec)
        reference, baseline, anomalous = make_scene(scene, spec, anomaly_spec)
        provenance = {"scene": scene.to_dict(), "degrade": spec.to_dict(), "reference_sha256": _cloud_digest(reference)}
        base_eval = evaluate_clouds(reference, baseline, config, inputs={**provenance, "kind": "baseline"})
        reports[f"report_{k:02d}_baseline.json"] = base_eval.report
        rows.append(_bench_row(label, base_eval.report))
        if anomalous is not None:
            an_eval = evaluate_clouds(
                reference, anomalous, config,
                inputs={**provenance, "kind": "anomalous", "anomaly": anomaly_spec.to_dict()},
                baseline_aligned=base_eval.aligned,
            )
            reports[f"report_{k:02d}_anomalous.json"] = an_eval.report
            rows.append(_bench_row(label + "+anomaly", an_eval.report, an_eval.report["anomaly"]))
    text = bench_csv(rows)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.csv").write_text(text)
        for name, rep in reports.items():
            (out / name).write_text(dumps(rep))
    return rows, text, reports


def write_scene(out_dir: str | Path, scene: SceneSpec, spec: DegradeSpec, anomaly: AnomalySpec | None) -> dict[str, Path]:
    """Write reference / reconstruction (/ anomalous) PLY files plus JSON sidecars with the generating specs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reference, baseline, anomalous = make_scene(scene, spec, anomaly)
    written = {}
    items = [("reference", reference, {"scene": scene.to_dict()}),
             ("reconstruction", baseline, {"scene": scene.to_dict(), "degrade": spec.to_dict()})]
    if anomalous is not None:
        items.append(("anomalous", anomalous, {"scene": scene.to_dict(), "degrade": spec.to_dict(), "anomaly": anomaly.to_dict()}))
    for name, cloud, meta in items:
        path = out / f"{name}.ply"
        save_pointcloud(cloud, path)
        meta = {**meta, "tool": "reconeval", "tool_version": __version__, "points": len(cloud)}
        (out / f"{name}.json").write_text(dumps(meta))
        written[name] = path
    return written
