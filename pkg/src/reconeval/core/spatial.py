"""Bounding boxes and exact nearest-neighbour queries."""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import cKDTree

from .types import AxisAlignedBox, PointCloud


def euclidean(a: ArrayLike, b: ArrayLike) -> NDArray[np.float64]:
    """Row-wise Euclidean distance, evaluated as sqrt(dx*dx + dy*dy + dz*dz).

    Every metric routes its final distances through this function so that
    values are reproducible bit-for-bit regardless of the search structure.
    """
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return np.sqrt(d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2])


def bounding_box(cloud: PointCloud) -> AxisAlignedBox:
    pts = cloud.require_nonempty().points
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    return AxisAlignedBox(tuple(float(v) for v in lo), tuple(float(v) for v in hi))


class NearestNeighborIndex:
    """Read-only kd-tree over a cloud. Ties resolve to the lowest point index."""

    def __init__(self, cloud: PointCloud | NDArray[np.float64]):
        pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("cannot index an empty cloud")
        self.points = pts
        self._tree = cKDTree(pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def query(self, queries: ArrayLike, max_distance: float = np.inf):
        """Nearest indexed point for every query row.

        Returns ``(distances, indices)``. Queries with no neighbour within
        ``max_distance`` get distance ``inf`` and index ``-1``.
        """
        q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        n = len(self)
        k = min(2, n)
        dist, idx = self._tree.query(q, k=k, distance_upper_bound=max_distance)
        if k == 1:
            dist = dist[:, None]
            idx = idx[:, None]
        best = idx[:, 0].copy()
        found = np.isfinite(dist[:, 0])
        if k > 1:
            # exact ties are rare; resolve them with a ball search so the lowest index wins
            for row in np.flatnonzero(found & (dist[:, 1] == dist[:, 0])):
                cand = np.array(self._tree.query_ball_point(q[row], dist[row, 0] * (1 + 1e-12) + 1e-300))
                dd = euclidean(self.points[cand], q[row])
                best[row] = cand[dd == dd.min()].min()
        out_d = np.full(q.shape[0], np.inf)
        out_i = np.full(q.shape[0], -1, dtype=np.int64)
        out_i[found] = best[found]
        out_d[found] = euclidean(self.points[best[found]], q[found])
        return out_d, out_i

    def query_radius(self, queries: ArrayLike, radius: float) -> list[list[int]]:
        return self._tree.query_ball_point(np.atleast_2d(queries), radius)


def build_nn_index(cloud: PointCloud) -> NearestNeighborIndex:
    return NearestNeighborIndex(cloud.require_nonempty())


def nearest_distances(source: PointCloud | NDArray, target: PointCloud | NDArray, index: NearestNeighborIndex | None = None):
    """Distances (and indices) from every ``source`` point to its nearest ``target`` point."""
    src = source.points if isinstance(source, PointCloud) else source
    index = index or NearestNeighborIndex(target)
    return index.query(src)
