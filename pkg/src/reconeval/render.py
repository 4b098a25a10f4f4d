"""Virtual camera rigs and a depth-buffered point splatting renderer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core.spatial import bounding_box
from .core.types import CameraView, GrayImage, PointCloud

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))
DEFAULT_INTENSITY_VALUE = 200


@dataclass(frozen=True)
class SplatConfig:
    point_radius_px: int = 1
    background: int = 0
    depth_test: bool = True

    def __post_init__(self):
        if not 0 <= self.point_radius_px <= 32:
            raise ValueError("point_radius_px must be within [0, 32]")
        if not 0 <= self.background <= 255:
            raise ValueError("background must be an 8-bit value")


@dataclass(frozen=True, eq=False)
class VirtualCameraRig:
    views: list[CameraView]
    target: NDArray[np.float64]
    radius: float

    def __len__(self) -> int:
        return len(self.views)

    def __iter__(self):
        return iter(self.views)


@dataclass(frozen=True)
class Intrinsics:
    width: int = 320
    height: int = 320
    fov_deg: float = 40.0

    @property
    def focal(self) -> float:
        return 0.5 * self.width / np.tan(np.radians(self.fov_deg) / 2.0)


def look_at(position: ArrayLike, target: ArrayLike) -> NDArray[np.float64]:
    """Camera-to-world rotation with +Z towards ``target``, +Y pointing down.

    World z is used as the up vector unless the view direction is (nearly)
    parallel to it, in which case world x is used instead.
    """
    f = np.asarray(target, dtype=np.float64) - np.asarray(position, dtype=np.float64)
    norm = np.linalg.norm(f)
    if norm == 0:
        raise ValueError("camera position coincides with target")
    f = f / norm
    up = np.array([0.0, 0.0, 1.0])
    if abs(f @ up) > 0.999:
        up = np.array([1.0, 0.0, 0.0])
    right = np.cross(f, up)
    right /= np.linalg.norm(right)
    down = np.cross(f, right)
    return np.column_stack([right, down, f])


def fibonacci_sphere(n: int, *, tol: float = 1e-14, max_iter: int = 100) -> NDArray[np.float64]:
    """``n`` near-uniform unit vectors, re-centred so their mean is the origin.

    The raw lattice has a small residual centroid (~1e-4 at n=100); each
    re-centring pass subtracts it and re-projects onto the sphere, which moves
    points by about that much and leaves the angular spacing intact.
    """
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = i * GOLDEN_ANGLE
    P = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    if n < 2:
        return P
    for _ in range(max_iter):
        c = P.mean(axis=0)
        if np.linalg.norm(c) < tol:
            break
        P = P - c
        P /= np.linalg.norm(P, axis=1)[:, None]
    return P


def make_camera_rig(
    cloud: PointCloud,
    n_views: int = 32,
    radius_factor: float = 2.0,
    intrinsics: Intrinsics = Intrinsics(),
) -> VirtualCameraRig:
    """Place ``n_views`` cameras on a sphere around the cloud centroid, all aimed at it."""
    if n_views < 1:
        raise ValueError("n_views must be >= 1")
    if radius_factor <= 0:
        raise ValueError("radius_factor must be positive")
    cloud.require_nonempty()
    target = cloud.centroid
    radius = radius_factor * bounding_box(cloud).diagonal
    if radius == 0:
        radius = radius_factor  # single-point cloud: fall back to unit diagonal
    dirs = fibonacci_sphere(n_views)
    views = []
    for d in dirs:
        pos = target + radius * d
        views.append(_make_view(pos, target, intrinsics))
    return VirtualCameraRig(views, target, float(radius))


def _make_view(position, target, intrinsics: Intrinsics) -> CameraView:
    return CameraView(
        position=position,
        orientation=look_at(position, target),
        focal=intrinsics.focal,
        cx=intrinsics.width / 2.0,
        cy=intrinsics.height / 2.0,
        width=intrinsics.width,
        height=intrinsics.height,
    )


def project(points: ArrayLike, view: CameraView):
    """Pinhole projection. Returns ``(u, v, depth)`` arrays; depth <= 0 means behind."""
    cam = view.world_to_camera(points)
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = view.focal * cam[:, 0] / z + view.cx
        v = view.focal * cam[:, 1] / z + view.cy
    return u, v, z


def disc_offsets(radius: int) -> NDArray[np.int64]:
    """Integer (dx, dy) offsets of a filled disc; radius 0 is the single centre pixel."""
    r = int(radius)
    dy, dx = np.mgrid[-r: r + 1, -r: r + 1]
    keep = dx * dx + dy * dy <= r * r
    return np.column_stack([dx[keep], dy[keep]])


def pixel_values(cloud: PointCloud) -> NDArray[np.uint8]:
    if cloud.intensity is None:
        return np.full(len(cloud), DEFAULT_INTENSITY_VALUE, dtype=np.uint8)
    return np.rint(255.0 * cloud.intensity).astype(np.uint8)


def render_view(cloud: PointCloud, view: CameraView, config: SplatConfig = SplatConfig()) -> GrayImage:
    """Splat every point in front of the camera as a disc centred on its rounded pixel.

    Pixel (row i, column j) has its centre at image coordinates (u=j, v=i).
    With ``depth_test`` the nearest point wins each pixel (ties go to the
    lower point index); without it, later points overwrite earlier ones.
    """
    W, H = view.width, view.height
    image = np.full(H * W, config.background, dtype=np.uint8)
    if len(cloud) == 0:
        return GrayImage(image.reshape(H, W))
    u, v, z = project(cloud.points, view)
    front = np.flatnonzero(z > 0)
    if front.size == 0:
        return GrayImage(image.reshape(H, W))
    cu = np.rint(u[front])
    cv = np.rint(v[front])
    r = config.point_radius_px
    # drop points whose disc cannot touch the image (also guards int overflow)
    near = (cu >= -r) & (cu < W + r) & (cv >= -r) & (cv < H + r)
    front, cu, cv = front[near], cu[near].astype(np.int64), cv[near].astype(np.int64)
    if front.size == 0:
        return GrayImage(image.reshape(H, W))

    offs = disc_offsets(r)
    px = (cu[:, None] + offs[None, :, 0]).ravel()
    py = (cv[:, None] + offs[None, :, 1]).ravel()
    owner = np.repeat(front, offs.shape[0])
    inside = (px >= 0) & (px < W) & (py >= 0) & (py < H)
    px, py, owner = px[inside], py[inside], owner[inside]
    pix = py * W + px

    if config.depth_test:
        order = np.lexsort((owner, z[owner], pix))
    else:
        order = np.lexsort((-owner, pix))
    pix_sorted = pix[order]
    first = np.ones(pix_sorted.size, dtype=bool)
    first[1:] = pix_sorted[1:] != pix_sorted[:-1]
    winners = order[first]
    image[pix[winners]] = pixel_values(cloud)[owner[winners]]
    return GrayImage(image.reshape(H, W))


def render_pair(
    reference: PointCloud,
    reconstructed_aligned: PointCloud,
    rig: VirtualCameraRig,
    config: SplatConfig = SplatConfig(),
) -> list[tuple[GrayImage, GrayImage]]:
    return [(render_view(reference, view, config), render_view(reconstructed_aligned, view, config)) for view in rig]
