"""Image preprocessing, Harris + binary-descriptor features, homography RANSAC."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from ._pattern import BRIEF_PATTERN
from .core.types import GrayImage
from .errors import DegenerateGeometry

HARRIS_K = 0.04
NMS_RADIUS = 4
PATCH_HALF = 15
RATIO_TEST = 0.8
# Harris response floor for intensities scaled to [0, 1]
DEFAULT_RESPONSE_THRESHOLD = 1e-5

_PATTERN = np.asarray(BRIEF_PATTERN, dtype=np.int64)
_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


@dataclass(frozen=True)
class PreprocessConfig:
    sharpen_amount: float = 1.0
    brightness_offset: int = 10
    gamma: float = 1.0

    def __post_init__(self):
        if self.sharpen_amount < 0:
            raise ValueError("sharpen_amount must be >= 0")
        if not -255 <= self.brightness_offset <= 255:
            raise ValueError("brightness_offset must be within [-255, 255]")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True, eq=False)
class FeatureSet:
    keypoints: NDArray[np.float64]  # (N, 3): u (column), v (row), response
    descriptors: NDArray[np.uint8]  # (N, 32): 256 packed bits

    def __len__(self) -> int:
        return len(self.keypoints)


@dataclass(frozen=True, eq=False)
class MatchResult:
    matches: NDArray[np.int64]  # (M, 3): index_a, index_b, hamming distance
    inliers: NDArray[np.int64]  # rows of ``matches`` that survived verification
    model: Optional[NDArray[np.float64]]
    iterations_run: int

    @property
    def inlier_count(self) -> int:
        return len(self.inliers)


def preprocess(image: GrayImage, config: PreprocessConfig = PreprocessConfig()) -> GrayImage:
    """gamma -> brightness offset (clamped) -> unsharp mask with a 3x3 box blur (clamped).

    Gamma maps x to 255 * (x / 255) ** (1 / gamma); values above 1 brighten.
    """
    x = image.data.astype(np.float64)
    if config.gamma != 1.0:
        x = 255.0 * (x / 255.0) ** (1.0 / config.gamma)
    x = np.clip(x + config.brightness_offset, 0.0, 255.0)
    if config.sharpen_amount:
        blur = ndimage.uniform_filter(x, size=3, mode="nearest")
        x = np.clip(x + config.sharpen_amount * (x - blur), 0.0, 255.0)
    return GrayImage(np.rint(x).astype(np.uint8))


def harris_response(image: GrayImage) -> NDArray[np.float64]:
    """Harris corner response (k = 0.04) from Sobel gradients summed over a 3x3 window."""
    x = image.data.astype(np.float64) / 255.0
    gx = ndimage.sobel(x, axis=1, mode="nearest") / 8.0
    gy = ndimage.sobel(x, axis=0, mode="nearest") / 8.0
    sxx = ndimage.uniform_filter(gx * gx, size=3, mode="constant") * 9.0
    syy = ndimage.uniform_filter(gy * gy, size=3, mode="constant") * 9.0
    sxy = ndimage.uniform_filter(gx * gy, size=3, mode="constant") * 9.0
    return sxx * syy - sxy * sxy - HARRIS_K * (sxx + syy) ** 2


def _nms_footprint(radius: int) -> NDArray[np.bool_]:
    dy, dx = np.mgrid[-radius: radius + 1, -radius: radius + 1]
    return dx * dx + dy * dy <= radius * radius


def describe(image: GrayImage, keypoints: NDArray) -> NDArray[np.uint8]:
    """256-bit descriptors from fixed intensity comparisons on a smoothed image."""
    smooth = ndimage.uniform_filter(image.data.astype(np.float64), size=5, mode="nearest")
    u = keypoints[:, 0].astype(np.int64)
    v = keypoints[:, 1].astype(np.int64)
    p1 = smooth[v[:, None] + _PATTERN[None, :, 1], u[:, None] + _PATTERN[None, :, 0]]
    p2 = smooth[v[:, None] + _PATTERN[None, :, 3], u[:, None] + _PATTERN[None, :, 2]]
    return np.packbits(p1 < p2, axis=1)


def detect_features(
    image: GrayImage,
    max_features: int = 2000,
    *,
    threshold: float = DEFAULT_RESPONSE_THRESHOLD,
) -> FeatureSet:
    """Harris corners after radius-4 non-maximum suppression, strongest first.

    Keypoints closer than 15 px to the border are dropped because their
    31x31 descriptor patch would leave the image.
    """
    if image.width < 32 or image.height < 32:
        raise ValueError("feature detection needs at least a 32x32 image")
    R = harris_response(image)
    peak = ndimage.maximum_filter(R, footprint=_nms_footprint(NMS_RADIUS), mode="constant", cval=-np.inf)
    mask = (R == peak) & (R > threshold)
    mask[:PATCH_HALF, :] = False
    mask[-PATCH_HALF:, :] = False
    mask[:, :PATCH_HALF] = False
    mask[:, -PATCH_HALF:] = False
    rows, cols = np.nonzero(mask)
    resp = R[rows, cols]
    order = np.lexsort((cols, rows, -resp))[:max_features]
    kp = np.column_stack([cols[order], rows[order], resp[order]]).astype(np.float64)
    if len(kp) == 0:
        return FeatureSet(np.zeros((0, 3)), np.zeros((0, 32), dtype=np.uint8))
    return FeatureSet(kp, describe(image, kp))


def hamming_matrix(da: NDArray[np.uint8], db: NDArray[np.uint8]) -> NDArray[np.int64]:
    x = np.bitwise_xor(da[:, None, :], db[None, :, :])
    return _POPCOUNT[x].sum(axis=2, dtype=np.int64)


def match_descriptors(a: FeatureSet, b: FeatureSet, ratio: float = RATIO_TEST) -> NDArray[np.int64]:
    """Mutual nearest neighbours under Hamming distance that pass the ratio test."""
    if len(a) == 0 or len(b) == 0:
        return np.zeros((0, 3), dtype=np.int64)
    D = hamming_matrix(a.descriptors, b.descriptors)
    fwd = np.argmin(D, axis=1)
    bwd = np.argmin(D, axis=0)
    ia = np.arange(len(a))
    best = D[ia, fwd]
    if D.shape[1] > 1:
        second = np.partition(D, 1, axis=1)[:, 1]
        passes = best < ratio * second
    else:
        passes = np.ones(len(a), dtype=bool)
    keep = (bwd[fwd] == ia) & passes
    return np.column_stack([ia[keep], fwd[keep], best[keep]]).astype(np.int64)


def _normalising_transform(pts: NDArray) -> NDArray:
    c = pts.mean(axis=0)
    d = np.sqrt(np.sum((pts - c) ** 2, axis=1)).mean()
    s = np.sqrt(2.0) / d if d > 0 else 1.0
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])


def fit_homography(src: NDArray, dst: NDArray) -> Optional[NDArray]:
    """Normalised DLT; ``None`` for degenerate configurations."""
    if len(src) < 4:
        return None
    Ts = _normalising_transform(src)
    Td = _normalising_transform(dst)
    hs = np.column_stack([src, np.ones(len(src))]) @ Ts.T
    hd = np.column_stack([dst, np.ones(len(dst))]) @ Td.T
    zeros = np.zeros((len(src), 3))
    x, y = hd[:, 0:1], hd[:, 1:2]
    A = np.vstack([
        np.hstack([zeros, -hs, y * hs]),
        np.hstack([hs, zeros, -x * hs]),
    ])
    _, S, Vt = np.linalg.svd(A)
    if S[-2] < 1e-9 * S[0]:
        return None
    Hn = Vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ Hn @ Ts
    if abs(H[2, 2]) < 1e-12 or abs(np.linalg.det(H)) < 1e-12:
        return None
    return H / H[2, 2]


def _apply_h(H: NDArray, pts: NDArray) -> NDArray:
    hp = np.column_stack([pts, np.ones(len(pts))]) @ H.T
    with np.errstate(divide="ignore", invalid="ignore"):
        return hp[:, :2] / hp[:, 2:3]


def symmetric_transfer_error(H: NDArray, src: NDArray, dst: NDArray) -> NDArray:
    """sqrt(|dst - H src|^2 + |src - H^-1 dst|^2) per correspondence, in pixels."""
    try:
        Hinv = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        return np.full(len(src), np.inf)
    fwd = np.sum((_apply_h(H, src) - dst) ** 2, axis=1)
    bwd = np.sum((_apply_h(Hinv, dst) - src) ** 2, axis=1)
    err = np.sqrt(fwd + bwd)
    return np.where(np.isfinite(err), err, np.inf)


def match_and_verify(
    a: FeatureSet,
    b: FeatureSet,
    max_ransac_iters: int = 1000,
    inlier_px: float = 3.0,
    *,
    seed: int = 0,
) -> MatchResult:
    """Descriptor matching followed by homography RANSAC over 4-match samples.

    Runs exactly ``max_ransac_iters`` hypotheses (no adaptive early exit),
    then refits the best model on its inliers.
    """
    if len(a) == 0 or len(b) == 0:
        raise DegenerateGeometry("empty feature set")
    matches = match_descriptors(a, b)
    if len(matches) < 4:
        raise DegenerateGeometry(f"only {len(matches)} candidate matches; need 4")
    src = a.keypoints[matches[:, 0], :2]
    dst = b.keypoints[matches[:, 1], :2]
    rng = np.random.default_rng(seed)
    best_H, best_mask = None, np.zeros(len(matches), dtype=bool)
    for _ in range(max_ransac_iters):
        sample = rng.choice(len(matches), size=4, replace=False)
        H = fit_homography(src[sample], dst[sample])
        if H is None:
            continue
        mask = symmetric_transfer_error(H, src, dst) < inlier_px
        if mask.sum() > best_mask.sum():
            best_H, best_mask = H, mask
    if best_H is None:
        return MatchResult(matches, np.zeros(0, dtype=np.int64), None, max_ransac_iters)
    refit = fit_homography(src[best_mask], dst[best_mask])
    if refit is not None:
        refit_mask = symmetric_transfer_error(refit, src, dst) < inlier_px
        if refit_mask.sum() >= best_mask.sum():
            best_H, best_mask = refit, refit_mask
    return MatchResult(matches, np.flatnonzero(best_mask), best_H, max_ransac_iters)


@dataclass(frozen=True)
class SweepRow:
    budget: int
    inlier_count: int
    elapsed_seconds: float
    repeat: int = 0


def ransac_sweep(
    a: FeatureSet,
    b: FeatureSet,
    iteration_budgets: Sequence[int],
    *,
    repeats: int = 1,
    base_seed: int = 0,
    inlier_px: float = 3.0,
    csv_path: str | Path | None = None,
) -> list[SweepRow]:
    """Time match_and_verify at each RANSAC budget; seed is base_seed + budget (+ repeat offset)."""
    rows = []
    for rep in range(repeats):
        for budget in iteration_budgets:
            seed = base_seed + int(budget) + 1_000_003 * rep
            t0 = time.perf_counter()
            result = match_and_verify(a, b, int(budget), inlier_px, seed=seed)
            elapsed = time.perf_counter() - t0
            rows.append(SweepRow(int(budget), result.inlier_count, elapsed, rep))
    if csv_path is not None:
        write_sweep_csv(rows, csv_path)
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["budget", "inlier_count", "elapsed_seconds"])
        for r in rows:
            w.writerow([r.budget, r.inlier_count, f"{r.elapsed_seconds:.6g}"])
