"""Anomaly detection by Hausdorff differencing and spatial localisation of deviations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .core.types import PointCloud
from .pcmetrics import PointCloudMetricSet, chamfer_mean, hausdorff, nn_distances

MIN_THRESHOLD = 0.01
MIN_CLUSTER_POINTS = 10


@dataclass(frozen=True)
class AnomalyRegion:
    centroid: tuple[float, float, float]
    point_count: int
    max_deviation: float
    indices: tuple[int, ...] = field(repr=False, default=())

    def summary(self) -> dict:
        return {"centroid": list(self.centroid), "point_count": self.point_count, "max_deviation": self.max_deviation}


@dataclass(frozen=True)
class AnomalyReport:
    hd_baseline: float
    hd_anomalous: float
    delta_hd: float
    detected: bool
    threshold: float
    anomaly_regions: tuple[AnomalyRegion, ...] = ()
    chamfer_baseline: Optional[float] = None
    chamfer_anomalous: Optional[float] = None
    threshold_rule: str = "max(0.01 m, 2 * hd_baseline)"

    def summary(self) -> dict:
        return {
            "hd_baseline": self.hd_baseline,
            "hd_anomalous": self.hd_anomalous,
            "delta_hd": self.delta_hd,
            "detected": self.detected,
            "threshold": self.threshold,
            "threshold_rule": self.threshold_rule,
            "chamfer_baseline": self.chamfer_baseline,
            "chamfer_anomalous": self.chamfer_anomalous,
            "anomaly_regions": [r.summary() for r in self.anomaly_regions],
        }


def default_threshold(hd_baseline: float) -> float:
    return max(MIN_THRESHOLD, 2.0 * hd_baseline)


def deviation_field(reference, anomalous_recon, metrics: PointCloudMetricSet | None = None) -> NDArray[np.float64]:
    """Per-point distance from the anomalous reconstruction to the clean reference.

    When ``metrics`` for the same pair is given, its rec->ref pass is reused.
    """
    if metrics is not None:
        return np.asarray(metrics.per_point_dist_rec_to_ref)
    return nn_distances(anomalous_recon, reference)


def localize_anomaly(
    anomalous_recon: PointCloud,
    field: NDArray[np.float64],
    deviation_cutoff: float,
    cluster_radius: float,
    *,
    min_points: int = MIN_CLUSTER_POINTS,
) -> list[AnomalyRegion]:
    """Single-linkage clusters of points deviating more than ``deviation_cutoff``.

    Clusters smaller than ``min_points`` are discarded; the rest are sorted by
    maximum deviation, largest first.
    """
    field = np.asarray(field, dtype=np.float64)
    if len(field) != len(anomalous_recon):
        raise ValueError("deviation field length must equal the cloud size")
    idx = np.flatnonzero(field > deviation_cutoff)
    if len(idx) == 0:
        return []
    pts = anomalous_recon.points[idx]
    pairs = cKDTree(pts).query_pairs(cluster_radius, output_type="ndarray")
    n = len(idx)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    regions = []
    for lab in np.unique(labels):
        members = np.flatnonzero(labels == lab)
        if len(members) < min_points:
            continue
        dev = field[idx[members]]
        regions.append(
            AnomalyRegion(
                centroid=tuple(float(v) for v in pts[members].mean(axis=0)),
                point_count=int(len(members)),
                max_deviation=float(dev.max()),
                indices=tuple(int(i) for i in idx[members]),
            )
        )
    regions.sort(key=lambda r: (-r.max_deviation, r.indices[0]))
    return regions


def mean_spacing(cloud: PointCloud) -> float:
    if len(cloud) < 2:
        return 0.0
    d, _ = cKDTree(cloud.points).query(cloud.points, k=2)
    return float(np.mean(d[:, 1]))


def detect_anomaly(
    reference: PointCloud,
    baseline_recon: PointCloud,
    anomalous_recon: PointCloud,
    threshold: float | None = None,
    *,
    deviation_cutoff: float | None = None,
    cluster_radius: float | None = None,
    anomalous_metrics: PointCloudMetricSet | None = None,
) -> AnomalyReport:
    """Compare HD of the anomalous and the baseline reconstruction, both against the clean reference.

    Both reconstructions must already be aligned to ``reference``. The
    default threshold is max(0.01 m, 2 * HD_B); the default localisation
    cutoff is the same value and the default cluster radius is three times
    the mean point spacing of the anomalous reconstruction.
    """
    hd_b = hausdorff(reference, baseline_recon)
    hd_a = hausdorff(reference, anomalous_recon)
    delta = hd_a - hd_b
    rule = "explicit"
    if threshold is None:
        threshold = default_threshold(hd_b)
        rule = "max(0.01 m, 2 * hd_baseline)"
    field = deviation_field(reference, anomalous_recon, anomalous_metrics)
    cutoff = threshold if deviation_cutoff is None else deviation_cutoff
    radius = 3.0 * mean_spacing(anomalous_recon) if cluster_radius is None else cluster_radius
    regions = localize_anomaly(anomalous_recon, field, cutoff, radius) if radius > 0 else []
    return AnomalyReport(
        hd_baseline=hd_b,
        hd_anomalous=hd_a,
        delta_hd=delta,
        detected=bool(delta > threshold),
        threshold=float(threshold),
        anomaly_regions=tuple(regions),
        chamfer_baseline=chamfer_mean(reference, baseline_recon),
        chamfer_anomalous=chamfer_mean(reference, anomalous_recon),
        threshold_rule=rule,
    )


def deviation_cloud(anomalous_recon: PointCloud, field: NDArray, cutoff: float) -> PointCloud | None:
    """Points above ``cutoff`` with intensity = deviation normalised to the field maximum."""
    field = np.asarray(field)
    idx = np.flatnonzero(field > cutoff)
    if len(idx) == 0:
        return None
    top = float(field.max())
    return PointCloud(anomalous_recon.points[idx], field[idx] / top if top > 0 else np.zeros(len(idx)))
