"""Point-cloud distances: Hausdorff, chamfer mean and 1-Wasserstein."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from scipy.spatial.distance import cdist

from .core.spatial import NearestNeighborIndex
from .core.types import PointCloud
from .errors import SolverDiverged


@dataclass(frozen=True)
class WassersteinConfig:
    exact_threshold: int = 256
    # None: 1% of the bounding-box diagonal of both clouds together
    epsilon: Optional[float] = None
    max_iterations: int = 20000
    tolerance: float = 1e-6
    sinkhorn_max_points: int = 1024
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class PointCloudMetricSet:
    hausdorff: float
    chamfer_mean: float
    wasserstein: float
    per_point_dist_rec_to_ref: NDArray[np.float64] = field(repr=False)
    wasserstein_solver: str = "exact"

    def summary(self) -> dict:
        return {
            "hausdorff": self.hausdorff,
            "chamfer_mean": self.chamfer_mean,
            "wasserstein": self.wasserstein,
            "wasserstein_solver": self.wasserstein_solver,
            "n_reconstructed_points": int(len(self.per_point_dist_rec_to_ref)),
        }


def _points(c) -> NDArray[np.float64]:
    if isinstance(c, PointCloud):
        return c.require_nonempty().points
    p = np.asarray(c, dtype=np.float64)
    if p.ndim != 2 or len(p) == 0:
        raise ValueError("expected a non-empty (N, 3) array")
    return p


def nn_distances(a, b) -> NDArray[np.float64]:
    """Distance from every point of ``a`` to its nearest point of ``b``."""
    d, _ = NearestNeighborIndex(_points(b)).query(_points(a))
    return d


def directed_hausdorff(a, b) -> tuple[float, int]:
    """max over a of the distance to the nearest point of b, and the arg-max index (lowest on ties)."""
    d = nn_distances(a, b)
    k = int(np.argmax(d))
    return float(d[k]), k


def hausdorff(a, b) -> float:
    return max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0])


def chamfer_mean(a, b) -> float:
    return 0.5 * (float(np.mean(nn_distances(a, b))) + float(np.mean(nn_distances(b, a))))


# ---------------------------------------------------------------------------
# optimal transport
# ---------------------------------------------------------------------------

def farthest_point_subsample(points: NDArray, k: int, seed: int = 0) -> NDArray[np.int64]:
    """Indices of ``k`` points chosen greedily to maximise spread; start point drawn from ``seed``."""
    n = len(points)
    if k >= n:
        return np.arange(n)
    start = int(np.random.default_rng(seed).integers(n))
    x, y, z = (np.ascontiguousarray(points[:, i], dtype=np.float64) for i in range(3))
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = start
    dist = np.full(n, np.inf)
    d = np.empty(n)
    t = np.empty(n)
    nxt = start
    for i in range(1, k):
        np.subtract(x, x[nxt], out=d)
        np.multiply(d, d, out=d)
        np.subtract(y, y[nxt], out=t)
        d += t * t
        np.subtract(z, z[nxt], out=t)
        d += t * t
        np.minimum(dist, d, out=dist)
        nxt = int(np.argmax(dist))
        chosen[i] = nxt
    return np.sort(chosen)


def min_cost_assignment(cost: NDArray) -> NDArray[np.int64]:
    """Optimal assignment for a square cost matrix by shortest augmenting paths.

    Returns ``col`` with ``col[i]`` the column given to row ``i``. Row-by-row
    Dijkstra-like augmentation with dual potentials (Hungarian method, O(n^3)).
    """
    C = np.asarray(cost, dtype=np.float64)
    n, m = C.shape
    if n != m:
        raise ValueError("cost matrix must be square")
    INF = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j]: row (1-based) matched to column j; column 0 is virtual
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, INF)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = C[i0 - 1, :] - u[i0] - v[1:]
            cols = np.flatnonzero(free[1:]) + 1
            better = cur[cols - 1] < minv[cols]
            upd = cols[better]
            minv[upd] = cur[upd - 1]
            way[upd] = j0
            j1 = cols[np.argmin(minv[cols])]
            delta = minv[j1]
            used_cols = np.flatnonzero(used)
            u[p[used_cols]] += delta
            v[used_cols] -= delta
            minv[cols] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col = np.empty(n, dtype=np.int64)
    col[p[1:] - 1] = np.arange(n)
    return col


def exact_wasserstein(a: NDArray, b: NDArray) -> float:
    """W1 between equal-size uniform empirical measures."""
    if len(a) != len(b):
        raise ValueError("exact solver needs equal-size clouds")
    C = cdist(a, b)
    col = min_cost_assignment(C)
    return float(np.mean(C[np.arange(len(a)), col]))


def _round_to_feasible(P: NDArray, r: NDArray, c: NDArray) -> NDArray:
    """Project a near-feasible plan onto the transport polytope (Altschuler et al. rounding)."""
    x = np.minimum(r / np.maximum(P.sum(axis=1), 1e-300), 1.0)
    P = P * x[:, None]
    y = np.minimum(c / np.maximum(P.sum(axis=0), 1e-300), 1.0)
    P = P * y[None, :]
    er = r - P.sum(axis=1)
    ec = c - P.sum(axis=0)
    mass = er.sum()
    if mass > 0:
        P = P + np.outer(er, ec) / mass
    return P


def sinkhorn_wasserstein(a: NDArray, b: NDArray, epsilon: float, max_iterations: int = 20000, tolerance: float = 1e-6) -> float:
    """Entropic W1 estimate: transport cost of the rounded Sinkhorn plan."""
    C = cdist(a, b)
    r = np.full(len(a), 1.0 / len(a))
    c = np.full(len(b), 1.0 / len(b))
    K = np.exp(-C / epsilon)
    v = np.ones(len(b))
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        for it in range(max_iterations):
            u = r / (K @ v)
            v = c / (K.T @ u)
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                raise SolverDiverged(f"non-finite Sinkhorn scaling at iteration {it}; increase epsilon")
            if it % 10 == 0:
                err = np.abs(u * (K @ v) - r).sum()
                if err < tolerance:
                    break
    P = u[:, None] * K * v[None, :]
    P = _round_to_feasible(P, r, c)
    return float(np.sum(P * C))


def _same_multiset(a: NDArray, b: NDArray) -> bool:
    if a.shape != b.shape:
        return False
    return bool(np.array_equal(a[np.lexsort(a.T[::-1])], b[np.lexsort(b.T[::-1])]))


def wasserstein(a, b, config: WassersteinConfig = WassersteinConfig()) -> float:
    return _wasserstein(a, b, config)[0]


def _wasserstein(a, b, config: WassersteinConfig) -> tuple[float, str]:
    pa, pb = _points(a), _points(b)
    if max(len(pa), len(pb)) <= config.exact_threshold:
        k = min(len(pa), len(pb))
        pa = pa[farthest_point_subsample(pa, k, config.seed)]
        pb = pb[farthest_point_subsample(pb, k, config.seed)]
        return exact_wasserstein(pa, pb), "exact"
    lim = config.sinkhorn_max_points
    pa = pa[farthest_point_subsample(pa, lim, config.seed)]
    pb = pb[farthest_point_subsample(pb, lim, config.seed)]
    if _same_multiset(pa, pb):
        # the entropic plan is biased away from zero even for equal samples
        return 0.0, "sinkhorn"
    eps = config.epsilon
    if eps is None:
        both = np.vstack([pa, pb])
        eps = 0.01 * float(np.linalg.norm(both.max(axis=0) - both.min(axis=0)))
        if eps == 0:
            return 0.0, "sinkhorn"
    return sinkhorn_wasserstein(pa, pb, eps, config.max_iterations, config.tolerance), "sinkhorn"


def compute_pc_metrics(reference, reconstructed_aligned, config: WassersteinConfig = WassersteinConfig()) -> PointCloudMetricSet:
    ref, rec = _points(reference), _points(reconstructed_aligned)
    d_rec = nn_distances(rec, ref)
    d_ref = nn_distances(ref, rec)
    hd = max(float(d_rec.max()), float(d_ref.max()))
    cm = 0.5 * (float(np.mean(d_rec)) + float(np.mean(d_ref)))
    wd, solver = _wasserstein(ref, rec, config)
    return PointCloudMetricSet(hd, cm, wd, d_rec, solver)
