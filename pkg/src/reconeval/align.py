"""Similarity alignment of a reconstruction onto a reference cloud.

Pipeline used by :func:`align_full`::

    scale from bounding boxes -> coarse rotation (PCA axes and/or FPFH + RANSAC)
    -> ICP refinement (with scale) -> composite Sim(3) transform
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from scipy.sparse import csr_matrix
from scipy.spatial import cKDTree

from .core.spatial import NearestNeighborIndex, bounding_box
from .core.types import PointCloud, Sim3Transform, project_to_rotation
from .errors import AmbiguousAxes, DegenerateCloud, NoCorrespondences, RegistrationFailed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IcpConfig:
    max_iterations: int = 50
    convergence_epsilon: float = 1e-6
    # None: 5% of the reference bounding-box diagonal
    max_correspondence_distance: Optional[float] = None
    estimate_scale: bool = False

    def __post_init__(self):
        if self.max_iterations < 1 or self.convergence_epsilon <= 0:
            raise ValueError("max_iterations and convergence_epsilon must be positive")
        if self.max_correspondence_distance is not None and self.max_correspondence_distance <= 0:
            raise ValueError("max_correspondence_distance must be positive")


@dataclass(frozen=True)
class AlignConfig:
    voxel_fraction: float = 0.02
    correspondence_fraction: float = 0.05
    icp_max_iterations: int = 50
    icp_epsilon: float = 1e-6
    icp_voxel_fraction: float = 0.004
    ransac_iterations: int = 20000
    ransac_seed: int = 42
    inlier_floor: float = 0.10
    eigen_ratio_min: float = 1.05
    normal_radius_factor: float = 2.0
    feature_radius_factor: float = 5.0
    score_points: int = 3000
    ransac_confidence: float = 0.999

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class AlignmentResult:
    transform: Sim3Transform
    rms_residual: float
    inlier_fraction: float
    iterations_used: int
    rms_trace: tuple[float, ...] = ()
    stage: str = ""

    def summary(self) -> dict:
        return {
            "transform": self.transform.to_dict(),
            "rms_residual": self.rms_residual,
            "inlier_fraction": self.inlier_fraction,
            "iterations_used": self.iterations_used,
            "coarse_stage": self.stage,
        }


# ---------------------------------------------------------------------------
# closed-form solvers
# ---------------------------------------------------------------------------

def umeyama(src: NDArray, dst: NDArray, with_scale: bool = False) -> Sim3Transform:
    """Least-squares similarity (or rigid) transform taking ``src[i]`` to ``dst[i]``."""
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    xs = src - mu_s
    xd = dst - mu_d
    cov = xd.T @ xs / len(src)
    U, S, Vt = np.linalg.svd(cov)
    d = np.ones(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        d[2] = -1.0
    R = U @ np.diag(d) @ Vt
    scale = 1.0
    if with_scale:
        var_s = np.mean(np.sum(xs * xs, axis=1))
        if var_s > 0:
            scale = float(np.sum(S * d) / var_s)
    t = mu_d - scale * R @ mu_s
    return Sim3Transform(scale, project_to_rotation(R), t)


def _batched_kabsch(src: NDArray, dst: NDArray):
    """Rigid fits for a batch of 3-point samples; shapes (B, 3, 3) -> R (B,3,3), t (B,3)."""
    mu_s = src.mean(axis=1, keepdims=True)
    mu_d = dst.mean(axis=1, keepdims=True)
    H = np.einsum("bki,bkj->bij", dst - mu_d, src - mu_s)
    U, _, Vt = np.linalg.svd(H)
    det = np.linalg.det(U @ Vt)
    D = np.ones((len(src), 3))
    D[:, 2] = np.where(det < 0, -1.0, 1.0)
    R = np.einsum("bij,bj,bjk->bik", U, D, Vt)
    t = mu_d[:, 0] - np.einsum("bij,bj->bi", R, mu_s[:, 0])
    return R, t


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def canonical_order(cloud: PointCloud) -> PointCloud:
    """Lexicographically sorted copy; makes every downstream stage order-invariant."""
    p = cloud.points
    order = np.lexsort((p[:, 2], p[:, 1], p[:, 0]))
    return cloud.subset(order)


def voxel_downsample(points: NDArray, voxel: float) -> NDArray:
    """Centroid of the points falling in each occupied voxel, voxels in key order."""
    keys = np.floor(points / voxel).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    sums = np.zeros((len(counts), 3))
    np.add.at(sums, inverse, points)
    return sums / counts[:, None]


def voxel_select(points: NDArray, voxel: float) -> NDArray[np.int64]:
    """Index of one real point per occupied voxel: the one nearest the voxel centre."""
    keys = np.floor(points / voxel).astype(np.int64)
    centre = (keys + 0.5) * voxel
    d = np.sum((points - centre) ** 2, axis=1)
    order = np.lexsort((np.arange(len(points)), d, keys[:, 2], keys[:, 1], keys[:, 0]))
    k = keys[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = np.any(k[1:] != k[:-1], axis=1)
    return np.sort(order[first])


def _thin(points: NDArray, target: int) -> NDArray:
    if len(points) <= target:
        return points
    # voxel size from a density guess, tightened until the target is respected
    box = np.ptp(points, axis=0)
    area = 2 * (box[0] * box[1] + box[1] * box[2] + box[0] * box[2]) or 1.0
    voxel = np.sqrt(area / target)
    idx = voxel_select(points, voxel)
    while len(idx) > target:
        voxel *= 1.2
        idx = voxel_select(points, voxel)
    return points[idx]


def symmetric_chamfer(a: NDArray, b: NDArray, tree_a: cKDTree | None = None, tree_b: cKDTree | None = None) -> float:
    tree_a = tree_a or cKDTree(a)
    tree_b = tree_b or cKDTree(b)
    da, _ = tree_b.query(a)
    db, _ = tree_a.query(b)
    return 0.5 * (float(da.mean()) + float(db.mean()))


def _diagonal(points: NDArray) -> float:
    return float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))


def _principal_frame(points: NDArray):
    centred = points - points.mean(axis=0)
    cov = centred.T @ centred / len(points)
    evals, evecs = np.linalg.eigh(cov)
    return evals[::-1], evecs[:, ::-1]


def oriented_diagonal(points: NDArray) -> float:
    """Bounding-box diagonal measured in the cloud's own principal frame."""
    _, evecs = _principal_frame(points)
    local = (points - points.mean(axis=0)) @ evecs
    return _diagonal(local)


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def estimate_scale(reference: PointCloud, reconstructed: PointCloud, *, oriented: bool = False) -> float:
    """Factor that scales ``reconstructed`` to the reference bounding-box diagonal.

    ``oriented=True`` measures both boxes in each cloud's principal frame,
    which makes the ratio independent of how the clouds are rotated.
    """
    reference.require_nonempty()
    reconstructed.require_nonempty()
    measure = oriented_diagonal if oriented else _diagonal
    d_ref = measure(reference.points)
    d_rec = measure(reconstructed.points)
    if d_ref <= 0 or d_rec <= 0:
        raise DegenerateCloud("bounding-box diagonal is zero")
    return d_ref / d_rec


def pca_orient(
    reference: PointCloud,
    reconstructed: PointCloud,
    *,
    eigen_ratio_min: float = 1.05,
    score_points: int = 3000,
) -> Sim3Transform:
    """Rigid transform matching principal axes and centroids of the two clouds.

    Of the four proper rotations consistent with the axes (eigenvector signs
    are arbitrary), the one with the smallest symmetric chamfer distance wins.
    """
    ref = reference.require_nonempty().points
    rec = reconstructed.require_nonempty().points
    if len(ref) < 3 or len(rec) < 3:
        raise DegenerateCloud("need at least three points for principal axes")
    ev_ref, E_ref = _principal_frame(ref)
    ev_rec, E_rec = _principal_frame(rec)
    for name, ev in (("reference", ev_ref), ("reconstructed", ev_rec)):
        if ev[0] <= 0:
            raise DegenerateCloud(f"{name} cloud has zero spread")
        ratios = ev[:-1] / np.maximum(ev[1:], np.finfo(float).tiny)
        if np.any(ratios <= eigen_ratio_min):
            raise AmbiguousAxes(f"{name} principal axes are not separable (eigenvalues {ev})")

    c_ref = ref.mean(axis=0)
    c_rec = rec.mean(axis=0)
    ref_s = _thin(ref, score_points)
    rec_s = _thin(rec, score_points)
    tree_ref = cKDTree(ref_s)
    best = None
    for signs in ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)):
        D = np.diag(signs).astype(float)
        R = E_ref @ D @ E_rec.T
        if np.linalg.det(R) < 0:
            R = E_ref @ (D @ np.diag([1.0, 1.0, -1.0])) @ E_rec.T
        R = project_to_rotation(R)
        T = Sim3Transform(1.0, R, c_ref - R @ c_rec)
        score = symmetric_chamfer(ref_s, T.apply(rec_s), tree_a=tree_ref)
        if best is None or score < best[0]:
            best = (score, T)
    return best[1]


def estimate_normals(points: NDArray, tree: cKDTree, radius: float) -> NDArray:
    """PCA normals over a radius neighbourhood, oriented away from the centroid."""
    n = len(points)
    neigh = tree.query_ball_point(points, radius)
    counts = np.array([len(x) for x in neigh])
    small = counts < 3
    if np.any(small):
        _, knn = tree.query(points[small], k=min(n, 8))
        for j, row in zip(np.flatnonzero(small), np.atleast_2d(knn)):
            neigh[j] = list(row)
        counts = np.array([len(x) for x in neigh])
    owner = np.repeat(np.arange(n), counts)
    idx = np.concatenate([np.asarray(x, dtype=np.int64) for x in neigh])
    q = points[idx]
    mean = np.column_stack([np.bincount(owner, weights=q[:, k], minlength=n) for k in range(3)])
    mean /= counts[:, None]
    d = q - mean[owner]
    cov = np.empty((n, 3, 3))
    for a in range(3):
        for b in range(a, 3):
            cov[:, a, b] = cov[:, b, a] = np.bincount(owner, weights=d[:, a] * d[:, b], minlength=n)
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    outward = points - points.mean(axis=0)
    flip = np.sum(normals * outward, axis=1) < 0
    normals[flip] *= -1
    return normals


def fpfh_features(points: NDArray, normals: NDArray, tree: cKDTree, radius: float, bins: int = 11) -> NDArray:
    """Fast Point Feature Histograms (3 x ``bins`` per point)."""
    n = len(points)
    pairs = tree.query_pairs(radius, output_type="ndarray")
    if len(pairs) == 0:
        return np.zeros((n, 3 * bins))
    i = np.concatenate([pairs[:, 0], pairs[:, 1]])
    j = np.concatenate([pairs[:, 1], pairs[:, 0]])
    p1, p2 = points[i], points[j]
    n1, n2 = normals[i], normals[j]
    dp = p2 - p1
    dist = np.linalg.norm(dp, axis=1)
    dist = np.where(dist == 0, 1.0, dist)
    a1 = np.sum(n1 * dp, axis=1) / dist
    a2 = np.sum(n2 * dp, axis=1) / dist
    # source point is the one whose normal is closer to the connecting line
    swap = np.arccos(np.clip(np.abs(a1), 0, 1)) > np.arccos(np.clip(np.abs(a2), 0, 1))
    ns = np.where(swap[:, None], n2, n1)
    nt = np.where(swap[:, None], n1, n2)
    dpv = np.where(swap[:, None], -dp, dp)
    f3 = np.where(swap, -a2, a1)
    v = np.cross(dpv, ns)
    vn = np.linalg.norm(v, axis=1)
    ok = vn > 0
    v[ok] /= vn[ok, None]
    w = np.cross(ns, v)
    f2 = np.sum(v * nt, axis=1)
    f1 = np.arctan2(np.sum(w * nt, axis=1), np.sum(ns * nt, axis=1))

    def bin_of(x, lo, hi):
        return np.clip(np.floor((x - lo) / (hi - lo) * bins), 0, bins - 1).astype(np.int64)

    width = 3 * bins
    flat = np.concatenate([i[ok] * width + k * bins + bin_of(f[ok], lo, hi)
                           for k, (f, lo, hi) in enumerate(((f1, -np.pi, np.pi), (f2, -1.0, 1.0), (f3, -1.0, 1.0)))])
    spfh = np.bincount(flat, minlength=n * width).astype(float).reshape(n, width)
    counts = np.bincount(i[ok], minlength=n).astype(float)
    nz = counts > 0
    spfh[nz] *= 100.0 / counts[nz, None]

    # neighbour SPFHs weighted by inverse distance, averaged over the neighbourhood
    weight = 1.0 / dist
    deg = np.bincount(i, minlength=n).astype(float)
    W = csr_matrix((weight, (i, j)), shape=(n, n))
    fpfh = spfh.copy()
    has = deg > 0
    fpfh[has] += (W @ spfh)[has] / deg[has, None]
    # renormalise each sub-histogram to sum to 100
    for k in range(3):
        block = fpfh[:, k * bins: (k + 1) * bins]
        s = block.sum(axis=1, keepdims=True)
        np.divide(block * 100.0, s, out=block, where=s > 0)
    return fpfh


_FEATURE_CACHE: dict[tuple, NDArray] = {}
_FEATURE_CACHE_SIZE = 8


def _features(points: NDArray, voxel: float, config: AlignConfig):
    # the reference cloud is registered against many reconstructions; memoise its descriptors
    key = (hashlib.sha1(np.ascontiguousarray(points).tobytes()).hexdigest(), voxel,
           config.normal_radius_factor, config.feature_radius_factor)
    cached = _FEATURE_CACHE.get(key)
    if cached is not None:
        return cached
    feats = _compute_features(points, voxel, config)
    if len(_FEATURE_CACHE) >= _FEATURE_CACHE_SIZE:
        _FEATURE_CACHE.pop(next(iter(_FEATURE_CACHE)))
    _FEATURE_CACHE[key] = feats
    return feats


def _compute_features(points: NDArray, voxel: float, config: AlignConfig):
    tree = cKDTree(points)
    normals = estimate_normals(points, tree, config.normal_radius_factor * voxel)
    return fpfh_features(points, normals, tree, config.feature_radius_factor * voxel)


def _nearest_rows(a: NDArray, b: NDArray, chunk: int = 2048) -> NDArray[np.int64]:
    """Index of the nearest row of ``b`` for every row of ``a`` (squared Euclidean, brute force)."""
    bb = np.einsum("ij,ij->i", b, b)
    out = np.empty(len(a), dtype=np.int64)
    for s in range(0, len(a), chunk):
        blk = a[s : s + chunk]
        out[s : s + chunk] = np.argmin(bb[None, :] - 2.0 * blk @ b.T, axis=1)
    return out


def _mutual_matches(f_src: NDArray, f_dst: NDArray) -> NDArray:
    fwd = _nearest_rows(f_src, f_dst)
    bwd = _nearest_rows(f_dst, f_src)
    src = np.arange(len(f_src))
    mutual = bwd[fwd] == src
    pairs = np.column_stack([src, fwd])
    if mutual.sum() >= 16:
        pairs = pairs[mutual]
    return pairs


def _ransac_trials(inlier_ratio: float, confidence: float, sample_size: int = 3) -> int:
    """Samples needed to draw one all-inlier sample with probability ``confidence``."""
    p = inlier_ratio ** sample_size
    if p >= 1.0:
        return 1
    if p <= 0.0:
        return np.iinfo(np.int64).max
    return int(np.ceil(np.log(1.0 - confidence) / np.log1p(-p)))


def global_register(
    reference: PointCloud,
    reconstructed: PointCloud,
    voxel_size: float,
    config: AlignConfig = AlignConfig(),
) -> AlignmentResult:
    """Coarse rigid registration from FPFH correspondences and 3-point RANSAC.

    Inliers are correspondences whose transformed source lies within
    1.5 * voxel_size of its matched target point.
    """
    if voxel_size <= 0:
        raise ValueError("voxel_size must be positive")
    ref = voxel_downsample(canonical_order(reference.require_nonempty()).points, voxel_size)
    rec = voxel_downsample(canonical_order(reconstructed.require_nonempty()).points, voxel_size)
    if len(ref) < 3 or len(rec) < 3:
        raise RegistrationFailed("too few points after downsampling")
    f_ref = _features(ref, voxel_size, config)
    f_rec = _features(rec, voxel_size, config)
    pairs = _mutual_matches(f_rec, f_ref)
    if len(pairs) < 3:
        raise RegistrationFailed("fewer than three descriptor correspondences")
    src = rec[pairs[:, 0]]
    dst = ref[pairs[:, 1]]
    m = len(pairs)
    thresh = 1.5 * voxel_size

    rng = np.random.default_rng(config.ransac_seed)
    best_count, best_R, best_t = -1, np.eye(3), np.zeros(3)
    batch = min(1000, max(32, 1_000_000 // m))
    used = 0
    needed = config.ransac_iterations
    while used < min(needed, config.ransac_iterations):
        b = min(batch, config.ransac_iterations - used)
        used += b
        sample = rng.integers(0, m, size=(b, 3))
        distinct = (sample[:, 0] != sample[:, 1]) & (sample[:, 1] != sample[:, 2]) & (sample[:, 0] != sample[:, 2])
        sample = sample[distinct]
        s, d = src[sample], dst[sample]
        # reject samples whose pairwise edge lengths disagree by > 10%
        es = np.linalg.norm(s - np.roll(s, 1, axis=1), axis=2)
        ed = np.linalg.norm(d - np.roll(d, 1, axis=1), axis=2)
        keep = np.all((es >= 0.9 * ed) & (ed >= 0.9 * es), axis=1) & np.all(es > 0, axis=1)
        if not keep.any():
            continue
        R, t = _batched_kabsch(s[keep], d[keep])
        resid = np.matmul(src[None], R.transpose(0, 2, 1)) + (t[:, None, :] - dst[None])
        counts = np.count_nonzero(np.einsum("bmi,bmi->bm", resid, resid) < thresh * thresh, axis=1)
        k = int(np.argmax(counts))
        if counts[k] > best_count:
            best_count, best_R, best_t = int(counts[k]), R[k], t[k]
            needed = _ransac_trials(best_count / m, config.ransac_confidence)

    if best_count < 3:
        raise RegistrationFailed("RANSAC found no consistent hypothesis")
    T = Sim3Transform(1.0, project_to_rotation(best_R), best_t)
    for _ in range(3):
        inl = np.sum((T.apply(src) - dst) ** 2, axis=1) < thresh * thresh
        if inl.sum() < 3:
            break
        T = umeyama(src[inl], dst[inl])
    inl = np.sum((T.apply(src) - dst) ** 2, axis=1) < thresh * thresh
    fraction = float(inl.mean())
    if fraction < config.inlier_floor:
        raise RegistrationFailed(f"inlier fraction {fraction:.3f} below floor {config.inlier_floor}")
    # polish on the downsampled clouds; the consensus fit only uses sparse matches
    polished = icp_refine(
        PointCloud(ref), PointCloud(rec), T,
        IcpConfig(max_iterations=30, convergence_epsilon=1e-9 * voxel_size, max_correspondence_distance=thresh),
    )
    return AlignmentResult(polished.transform, polished.rms_residual, fraction, used, stage="global")


def icp_refine(
    reference: PointCloud,
    reconstructed: PointCloud,
    initial: Sim3Transform = Sim3Transform(),
    config: IcpConfig = IcpConfig(),
    *,
    reference_index: NearestNeighborIndex | None = None,
) -> AlignmentResult:
    """Point-to-point ICP starting from ``initial``.

    Each iteration pairs every transformed reconstructed point with its nearest
    reference point (pairs beyond ``max_correspondence_distance`` are dropped)
    and solves the closed-form update by SVD. Stops when the RMS improves by
    less than ``convergence_epsilon`` or after ``max_iterations`` solves.
    """
    ref = reference.require_nonempty()
    src = reconstructed.require_nonempty().points
    max_d = config.max_correspondence_distance
    if max_d is None:
        max_d = 0.05 * bounding_box(ref).diagonal or np.inf
    index = reference_index or NearestNeighborIndex(ref)
    T = initial
    trace: list[float] = []
    iterations = 0

    def correspond(T):
        moved = T.apply(src)
        d, idx = index.query(moved, max_distance=max_d)
        ok = idx >= 0
        return moved, d, idx, ok

    moved, d, idx, ok = correspond(T)
    if not ok.any():
        raise NoCorrespondences(f"no reconstructed point within {max_d:g} m of the reference")
    rms = float(np.sqrt(np.mean(d[ok] ** 2)))
    trace.append(rms)
    while iterations < config.max_iterations:
        delta = umeyama(moved[ok], index.points[idx[ok]], with_scale=config.estimate_scale)
        candidate = delta.compose(T)
        c_moved, c_d, c_idx, c_ok = correspond(candidate)
        iterations += 1
        if not c_ok.any():
            break
        c_rms = float(np.sqrt(np.mean(c_d[c_ok] ** 2)))
        if c_rms > rms:
            # newly admitted far pairs raised the RMS; keep the previous estimate
            break
        T, moved, d, idx, ok = candidate, c_moved, c_d, c_idx, c_ok
        improvement = rms - c_rms
        rms = c_rms
        trace.append(rms)
        if improvement < config.convergence_epsilon:
            break
    return AlignmentResult(T, rms, float(ok.mean()), iterations, tuple(trace), stage="icp")


def align_full(
    reference: PointCloud,
    reconstructed: PointCloud,
    config: AlignConfig = AlignConfig(),
) -> AlignmentResult:
    """Scale, coarse orientation and ICP refinement, composed into one Sim(3) transform."""
    ref = canonical_order(reference.require_nonempty())
    rec = canonical_order(reconstructed.require_nonempty())
    diag = bounding_box(ref).diagonal
    if diag <= 0:
        raise DegenerateCloud("reference bounding-box diagonal is zero")
    if ref.points.shape == rec.points.shape and np.array_equal(ref.points, rec.points):
        # same point multiset: skip the solvers so self-evaluation is exact
        return AlignmentResult(Sim3Transform(), 0.0, 1.0, 0, (0.0,), stage="identical")

    try:
        s0 = estimate_scale(ref, rec, oriented=True)
    except np.linalg.LinAlgError:
        s0 = estimate_scale(ref, rec)
    c_rec = rec.centroid
    pre = Sim3Transform(s0, np.eye(3), -s0 * c_rec + ref.centroid)
    rec_s = pre.apply_cloud(rec)

    ref_thin = _thin(ref.points, config.score_points)
    tree_ref = cKDTree(ref_thin)
    rec_thin = _thin(rec_s.points, config.score_points)

    candidates: list[tuple[float, str, Sim3Transform]] = []
    errors = []
    try:
        T = pca_orient(ref, rec_s, eigen_ratio_min=config.eigen_ratio_min, score_points=config.score_points)
        candidates.append((symmetric_chamfer(ref_thin, T.apply(rec_thin), tree_a=tree_ref), "pca", T))
    except (AmbiguousAxes, DegenerateCloud) as exc:
        errors.append(f"pca: {exc}")
    try:
        g = global_register(ref, rec_s, config.voxel_fraction * diag, config)
        T = g.transform
        candidates.append((symmetric_chamfer(ref_thin, T.apply(rec_thin), tree_a=tree_ref), "global", T))
    except RegistrationFailed as exc:
        errors.append(f"global: {exc}")
    if not candidates:
        raise RegistrationFailed("; ".join(errors))
    score, stage, coarse = min(candidates, key=lambda c: (c[0], c[1]))
    logger.debug("coarse stage %s chamfer %.6g (%s)", stage, score, errors)

    icp_src = rec_s
    if config.icp_voxel_fraction > 0:
        icp_src = rec_s.subset(voxel_select(rec_s.points, config.icp_voxel_fraction * diag))
    icp_cfg = IcpConfig(
        max_iterations=config.icp_max_iterations,
        convergence_epsilon=config.icp_epsilon,
        max_correspondence_distance=config.correspondence_fraction * diag,
        estimate_scale=True,
    )
    refined = icp_refine(ref, icp_src, coarse, icp_cfg)
    total = refined.transform.compose(pre)
    return replace(refined, transform=total, stage=stage)
