"""Synthetic reference objects, degraded reconstructions, anomalies and pose noise."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core.spatial import NearestNeighborIndex, bounding_box
from .core.types import PointCloud
from .errors import BoxDisjoint
from .render import VirtualCameraRig, look_at

FLAT_INTENSITY = 0.8
ENGRAVED_INTENSITY = 0.5
OCCLUDER_INTENSITY = 0.3


@dataclass(frozen=True)
class SceneSpec:
    object_extents: tuple[float, float, float] = (0.547, 0.203, 0.209)
    engraving_depth: float = 0.04
    surface_sample_density: float = 35_000.0
    seed: int = 0
    n_engravings: int = 4

    def __post_init__(self):
        if min(self.object_extents) <= 0 or self.engraving_depth <= 0:
            raise ValueError("extents and engraving depth must be positive")
        if self.engraving_depth >= min(self.object_extents):
            raise ValueError("engraving depth must be smaller than the smallest extent")
        if self.surface_sample_density <= 0:
            raise ValueError("surface_sample_density must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DegradeSpec:
    noise_sigma: float = 0.0
    dropout_fraction: float = 0.0
    outlier_fraction: float = 0.0
    outlier_scale: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0 or self.outlier_scale < 0:
            raise ValueError("noise_sigma and outlier_scale must be non-negative")
        if not (0 <= self.dropout_fraction < 1 and 0 <= self.outlier_fraction < 1):
            raise ValueError("fractions must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PoseNoiseSpec:
    position_sigma: float = 0.10 / math.sqrt(3.0)
    yaw_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.position_sigma < 0 or self.yaw_sigma < 0:
            raise ValueError("sigmas must be non-negative")


@dataclass(frozen=True)
class _Patch:
    """Planar rectangle origin + a*u + b*v, a, b in [0, 1]."""

    origin: NDArray[np.float64]
    u: NDArray[np.float64]
    v: NDArray[np.float64]
    intensity: float

    @property
    def area(self) -> float:
        return float(np.linalg.norm(np.cross(self.u, self.v)))


def _box_patches(lo: ArrayLike, hi: ArrayLike, intensity: float) -> list[_Patch]:
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    ext = hi - lo
    patches = []
    for axis in range(3):
        a, b = [k for k in range(3) if k != axis]
        u = np.zeros(3)
        v = np.zeros(3)
        u[a] = ext[a]
        v[b] = ext[b]
        for side in (lo[axis], hi[axis]):
            o = lo.copy()
            o[axis] = side
            patches.append(_Patch(o, u, v, intensity))
    return patches


def engraving_rects(spec: SceneSpec) -> list[tuple[float, float, float, float]]:
    """(x0, x1, z0, z1) footprints of the recesses on the +y face.

    Recesses occupy the upper part of the face and leave a flat strip below
    them where the default anomaly box sits.
    """
    ex, _, ez = spec.object_extents
    n = spec.n_engravings
    if n == 0:
        return []
    margin = 0.08 * ex
    pitch = (ex - 2 * margin) / n
    width = 0.7 * pitch
    z0, z1 = -0.05 * ez, 0.38 * ez
    rects = []
    for k in range(n):
        cx = -ex / 2 + margin + (k + 0.5) * pitch
        rects.append((cx - width / 2, cx + width / 2, z0, z1))
    return rects


def _reference_patches(spec: SceneSpec) -> tuple[list[_Patch], list[tuple[float, float, float, float]]]:
    ext = np.asarray(spec.object_extents, dtype=np.float64)
    lo, hi = -ext / 2, ext / 2
    patches = _box_patches(lo, hi, FLAT_INTENSITY)
    y_face = hi[1]
    d = spec.engraving_depth
    rects = engraving_rects(spec)
    for x0, x1, z0, z1 in rects:
        w, h = x1 - x0, z1 - z0
        # recess walls: x = x0, x = x1 (span y, z) and z = z0, z = z1 (span x, y)
        for x in (x0, x1):
            patches.append(_Patch(np.array([x, y_face - d, z0]), np.array([0, d, 0.0]), np.array([0, 0, h]), ENGRAVED_INTENSITY))
        for z in (z0, z1):
            patches.append(_Patch(np.array([x0, y_face - d, z]), np.array([w, 0, 0.0]), np.array([0, d, 0.0]), ENGRAVED_INTENSITY))
    return patches, rects


def surface_area(spec: SceneSpec) -> float:
    """Total sampled area: block faces plus recess walls (floors replace face holes 1:1)."""
    patches, _ = _reference_patches(spec)
    return sum(p.area for p in patches)


def _sample_patches(patches: list[_Patch], n: int, rng: np.random.Generator):
    areas = np.array([p.area for p in patches])
    if n == 0 or areas.sum() == 0:
        return np.zeros((0, 3)), np.zeros(0), np.zeros(0, dtype=np.int64)
    counts = rng.multinomial(n, areas / areas.sum())
    pts, inten, owner = [], [], []
    for k, (p, c) in enumerate(zip(patches, counts)):
        ab = rng.random((c, 2))
        pts.append(p.origin + ab[:, :1] * p.u + ab[:, 1:] * p.v)
        inten.append(np.full(c, p.intensity))
        owner.append(np.full(c, k))
    return np.vstack(pts), np.concatenate(inten), np.concatenate(owner)


def generate_reference(spec: SceneSpec = SceneSpec()) -> PointCloud:
    """Uniform surface samples of a block with rectangular recesses on its +y face.

    The block is centred on the origin. Samples landing on the face inside a
    recess footprint are pushed down onto the recess floor, which has the same
    footprint, so the area density stays uniform.
    """
    rng = np.random.default_rng(spec.seed)
    patches, rects = _reference_patches(spec)
    n = int(round(surface_area(spec) * spec.surface_sample_density))
    pts, inten, _ = _sample_patches(patches, n, rng)
    y_face = spec.object_extents[1] / 2
    on_face = np.isclose(pts[:, 1], y_face, rtol=0, atol=1e-12)
    for x0, x1, z0, z1 in rects:
        hole = on_face & (pts[:, 0] > x0) & (pts[:, 0] < x1) & (pts[:, 2] > z0) & (pts[:, 2] < z1)
        pts[hole, 1] = y_face - spec.engraving_depth
        inten[hole] = ENGRAVED_INTENSITY
    return PointCloud(pts, inten)


def default_anomaly_box(spec: SceneSpec = SceneSpec(), protrusion: float = 0.04) -> tuple[NDArray, NDArray]:
    """Occluding box on the flat strip of the engraved face, protruding ``protrusion`` m.

    Returns ``(center, extents)``.
    """
    ex, ey, ez = spec.object_extents
    y0 = ey / 2 - 0.01
    y1 = ey / 2 + protrusion
    z0, z1 = -0.42 * ez, -0.15 * ez
    x0, x1 = -0.25 * ex, 0.25 * ex
    lo = np.array([x0, y0, z0])
    hi = np.array([x1, y1, z1])
    return (lo + hi) / 2, hi - lo


def degrade(cloud: PointCloud, spec: DegradeSpec) -> PointCloud:
    """Dropout, then isotropic Gaussian jitter, then outlier replacement."""
    rng = np.random.default_rng(spec.seed)
    n = len(cloud)
    keep_n = math.ceil((1.0 - spec.dropout_fraction) * n)
    if keep_n < n:
        keep = np.sort(rng.choice(n, size=keep_n, replace=False))
        cloud = cloud.subset(keep)
    pts = np.array(cloud.points)
    if spec.noise_sigma > 0:
        pts = pts + rng.normal(0.0, spec.noise_sigma, size=pts.shape)
    n_out = int(round(spec.outlier_fraction * len(pts)))
    if n_out > 0:
        box = bounding_box(cloud)
        lo = np.asarray(box.min_corner) - spec.outlier_scale
        hi = np.asarray(box.max_corner) + spec.outlier_scale
        idx = np.sort(rng.choice(len(pts), size=n_out, replace=False))
        pts[idx] = lo + rng.random((n_out, 3)) * (hi - lo)
    return cloud.with_points(pts)


def estimate_area_density(cloud: PointCloud) -> float:
    """Surface sample density from the mean nearest-neighbour spacing.

    For uniform samples on a plane the expected NN spacing is 0.5/sqrt(density).
    """
    if len(cloud) < 2:
        return 0.0
    index = NearestNeighborIndex(cloud)
    _, nn = index._tree.query(cloud.points, k=2)
    spacing = float(np.mean(np.linalg.norm(cloud.points[nn[:, 1]] - cloud.points, axis=1)))
    return 0.25 / (spacing * spacing) if spacing > 0 else 0.0


def mean_point_spacing(cloud: PointCloud) -> float:
    index = NearestNeighborIndex(cloud)
    d, _ = index._tree.query(cloud.points, k=2)
    return float(np.mean(d[:, 1]))


def inject_anomaly(
    cloud: PointCloud,
    box_center: ArrayLike,
    box_extents: ArrayLike,
    *,
    density: float | None = None,
    seed: int = 0,
) -> PointCloud:
    """Place an occluding box into a scanned scene.

    Points hidden inside the box are removed and the box's exposed surface
    (the parts outside the object's bounding box) is sampled at the cloud's
    own density.
    """
    center = np.asarray(box_center, dtype=np.float64).reshape(3)
    ext = np.asarray(box_extents, dtype=np.float64).reshape(3)
    if np.any(ext < 0):
        raise ValueError("box extents must be non-negative")
    lo, hi = center - ext / 2, center + ext / 2
    obox = bounding_box(cloud)
    olo, ohi = np.asarray(obox.min_corner), np.asarray(obox.max_corner)
    if np.any(hi < olo) or np.any(lo > ohi):
        raise BoxDisjoint("anomaly box does not intersect the object")

    pts = cloud.points
    inside = np.all((pts > lo) & (pts < hi), axis=1)
    kept = cloud.subset(np.flatnonzero(~inside))

    if density is None:
        density = estimate_area_density(cloud)
    rng = np.random.default_rng(seed)
    patches = [p for p in _box_patches(lo, hi, OCCLUDER_INTENSITY) if p.area > 0]
    area = sum(p.area for p in patches)
    n_new = int(round(area * density))
    if n_new == 0:
        return kept
    new_pts, new_int, _ = _sample_patches(patches, n_new, rng)
    exposed = ~np.all((new_pts > olo) & (new_pts < ohi), axis=1)
    new_pts, new_int = new_pts[exposed], new_int[exposed]
    if kept.intensity is None:
        return PointCloud(np.vstack([kept.points, new_pts]))
    return PointCloud(np.vstack([kept.points, new_pts]), np.concatenate([kept.intensity, new_int]))


def noisy_poses(rig: VirtualCameraRig, spec: PoseNoiseSpec) -> VirtualCameraRig:
    """Jitter camera positions (per-axis Gaussian) and orbit heading, then re-aim at the target.

    Yaw noise rotates each position about the vertical axis through the
    target, mimicking heading error of a UAV orbiting the object.
    """
    rng = np.random.default_rng(spec.seed)
    n = len(rig)
    yaw = rng.normal(0.0, spec.yaw_sigma, size=n) if spec.yaw_sigma > 0 else np.zeros(n)
    shift = rng.normal(0.0, spec.position_sigma, size=(n, 3)) if spec.position_sigma > 0 else np.zeros((n, 3))
    views = []
    for view, dyaw, dp in zip(rig.views, yaw, shift):
        if dyaw == 0 and not dp.any():
            views.append(view)
            continue
        c, s = math.cos(dyaw), math.sin(dyaw)
        Rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        pos = rig.target + Rz @ (view.position - rig.target) + dp
        views.append(
            type(view)(
                position=pos,
                orientation=look_at(pos, rig.target),
                focal=view.focal,
                cx=view.cx,
                cy=view.cy,
                width=view.width,
                height=view.height,
            )
        )
    return VirtualCameraRig(views, rig.target, rig.radius)


# ---------------------------------------------------------------------------
# synthetic imagery
# ---------------------------------------------------------------------------

def textured_frame(
    size: tuple[int, int] = (160, 160),
    *,
    seed: int = 0,
    n_shapes: int = 60,
    low: int = 100,
    high: int = 140,
) -> "GrayImage":
    """Low-contrast frame of overlapping axis-aligned rectangles (plenty of corners)."""
    from .core.types import GrayImage

    h, w = size
    rng = np.random.default_rng(seed)
    img = np.full((h, w), (low + high) / 2.0)
    for _ in range(n_shapes):
        x0, y0 = rng.integers(0, w - 4), rng.integers(0, h - 4)
        x1 = min(w, x0 + int(rng.integers(4, max(5, w // 4))))
        y1 = min(h, y0 + int(rng.integers(4, max(5, h // 4))))
        img[y0:y1, x0:x1] = rng.uniform(low, high)
    return GrayImage(np.rint(img).astype(np.uint8))


def warp_image(image: "GrayImage", H: ArrayLike, *, noise_sigma: float = 0.0, seed: int = 0, fill: int = 0) -> "GrayImage":
    """Resample ``image`` under homography ``H`` (source pixel -> destination pixel), optional Gaussian noise."""
    from scipy import ndimage

    from .core.types import GrayImage

    H = np.asarray(H, dtype=np.float64)
    h, w = image.height, image.width
    ys, xs = np.mgrid[0:h, 0:w]
    dst = np.stack([xs.ravel(), ys.ravel(), np.ones(h * w)])
    src = np.linalg.inv(H) @ dst
    sx, sy = src[0] / src[2], src[1] / src[2]
    out = ndimage.map_coordinates(image.data.astype(np.float64), [sy, sx], order=1, mode="constant", cval=fill)
    out = out.reshape(h, w)
    if noise_sigma > 0:
        out = out + np.random.default_rng(seed).normal(0.0, noise_sigma, out.shape)
    return GrayImage(np.clip(np.rint(out), 0, 255).astype(np.uint8))
