"""Immutable domain types: point clouds, boxes, similarity transforms, cameras, images."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..errors import EmptyCloud

_ORTHO_TOL = 1e-9


def _frozen(arr: NDArray) -> NDArray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered 3D points in meters with optional per-point intensity in [0, 1]."""

    points: NDArray[np.float64]
    intensity: Optional[NDArray[np.float64]] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1 and pts.size == 3:
            pts = pts.reshape(1, 3)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", _frozen(pts))
        if self.intensity is not None:
            inten = np.asarray(self.intensity, dtype=np.float64).reshape(-1)
            if inten.shape[0] != pts.shape[0]:
                raise ValueError("intensity length must equal point count")
            if not np.all(np.isfinite(inten)) or inten.min(initial=0.0) < 0 or inten.max(initial=0.0) > 1:
                raise ValueError("intensity values must lie in [0, 1]")
            object.__setattr__(self, "intensity", _frozen(inten))

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def centroid(self) -> NDArray[np.float64]:
        return self.points.mean(axis=0)

    def require_nonempty(self) -> "PointCloud":
        if len(self) == 0:
            raise EmptyCloud("point cloud has no points")
        return self

    def subset(self, index: ArrayLike) -> "PointCloud":
        index = np.asarray(index)
        inten = None if self.intensity is None else self.intensity[index]
        return PointCloud(self.points[index], inten)

    def with_points(self, points: ArrayLike) -> "PointCloud":
        return PointCloud(points, self.intensity)


@dataclass(frozen=True)
class AxisAlignedBox:
    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]

    @property
    def extents(self) -> NDArray[np.float64]:
        return np.asarray(self.max_corner) - np.asarray(self.min_corner)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extents))

    @property
    def center(self) -> NDArray[np.float64]:
        return 0.5 * (np.asarray(self.min_corner) + np.asarray(self.max_corner))

    def contains(self, points: ArrayLike, tol: float = 0.0) -> NDArray[np.bool_]:
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        lo = np.asarray(self.min_corner) - tol
        hi = np.asarray(self.max_corner) + tol
        return np.all((p >= lo) & (p <= hi), axis=1)


def is_rotation(R: ArrayLike, tol: float = _ORTHO_TOL) -> bool:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        return False
    ortho = np.max(np.abs(R.T @ R - np.eye(3)))
    return bool(ortho < tol and abs(np.linalg.det(R) - 1.0) < tol)


def project_to_rotation(M: ArrayLike) -> NDArray[np.float64]:
    """Nearest proper rotation to ``M`` in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=np.float64))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt)) or 1.0])
    return U @ D @ Vt


@dataclass(frozen=True, eq=False)
class Sim3Transform:
    """x -> scale * rotation @ x + translation."""

    scale: float = 1.0
    rotation: NDArray[np.float64] = field(default_factory=lambda: np.eye(3))
    translation: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        s = float(self.scale)
        if not (s > 0 and np.isfinite(s)):
            raise ValueError("scale must be positive and finite")
        R = np.asarray(self.rotation, dtype=np.float64)
        if not is_rotation(R):
            # re-orthonormalise tiny drift from composition; reject anything else
            if R.shape == (3, 3) and np.max(np.abs(R.T @ R - np.eye(3))) < 1e-6 and np.linalg.det(R) > 0:
                R = project_to_rotation(R)
            else:
                raise ValueError("rotation must be a proper orthonormal 3x3 matrix")
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "scale", s)
        object.__setattr__(self, "rotation", _frozen(R))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls) -> "Sim3Transform":
        return cls()

    def apply(self, points: ArrayLike) -> NDArray[np.float64]:
        p = np.asarray(points, dtype=np.float64)
        return self.scale * (p @ self.rotation.T) + self.translation

    def apply_cloud(self, cloud: PointCloud) -> PointCloud:
        return cloud.with_points(self.apply(cloud.points))

    def compose(self, other: "Sim3Transform") -> "Sim3Transform":
        """Return ``self ∘ other`` (apply ``other`` first)."""
        return Sim3Transform(
            self.scale * other.scale,
            self.rotation @ other.rotation,
            self.scale * (self.rotation @ other.translation) + self.translation,
        )

    def __matmul__(self, other: "Sim3Transform") -> "Sim3Transform":
        return self.compose(other)

    def inverse(self) -> "Sim3Transform":
        inv_s = 1.0 / self.scale
        Rt = self.rotation.T
        return Sim3Transform(inv_s, Rt, -inv_s * (Rt @ self.translation))

    def as_matrix(self) -> NDArray[np.float64]:
        T = np.eye(4)
        T[:3, :3] = self.scale * self.rotation
        T[:3, 3] = self.translation
        return T

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }


@dataclass(frozen=True, eq=False)
class CameraView:
    """Pinhole camera. ``orientation`` maps camera axes to world axes.

    Camera frame convention: +Z forward (optical axis), +X right, +Y down.
    """

    position: NDArray[np.float64]
    orientation: NDArray[np.float64]
    focal: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        R = np.asarray(self.orientation, dtype=np.float64)
        if not is_rotation(R, tol=1e-8):
            raise ValueError("orientation must be a proper rotation")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")
        if not self.focal > 0:
            raise ValueError("focal length must be positive")
        object.__setattr__(self, "position", _frozen(pos))
        object.__setattr__(self, "orientation", _frozen(R))

    @property
    def forward(self) -> NDArray[np.float64]:
        return self.orientation[:, 2]

    def world_to_camera(self, points: ArrayLike) -> NDArray[np.float64]:
        p = np.asarray(points, dtype=np.float64) - self.position
        return p @ self.orientation


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grayscale raster; ``data`` has shape (height, width), row-major."""

    data: NDArray[np.uint8]

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValueError("image data must be 2D (height, width)")
        if arr.dtype != np.uint8:
            if np.issubdtype(arr.dtype, np.integer) and arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("pixel values must fit in 8 bits")
            arr = arr.astype(np.uint8)
        object.__setattr__(self, "data", _frozen(np.ascontiguousarray(arr)))

    @classmethod
    def filled(cls, width: int, height: int, value: int) -> "GrayImage":
        return cls(np.full((height, width), value, dtype=np.uint8))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, GrayImage) and np.array_equal(self.data, other.data)

    __hash__ = None
