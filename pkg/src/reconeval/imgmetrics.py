"""Image quality metrics between rendered view pairs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence, runtime_checkable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core.types import GrayImage
from .errors import BackendFailure, DimensionMismatch, EmptyInput, TooSmall

C1 = (0.01 * 255) ** 2
C2 = (0.03 * 255) ** 2
SSIM_WINDOW = 8
SSIM_STRIDE = 4


@runtime_checkable
class PerceptualBackend(Protocol):
    name: str

    def distance(self, a: GrayImage, b: GrayImage) -> float: ...


@dataclass(frozen=True)
class ImageMetricSet:
    psnr_db: float
    ssim_mean: float
    ssim_std: float
    perceptual_mean: float
    perceptual_std: float
    n_views: int
    perceptual_backend: str = "proxy"

    def summary(self) -> dict:
        return {
            "psnr_db": self.psnr_db,
            "psnr_aggregation": "pooled_mse",
            "ssim_mean": self.ssim_mean,
            "ssim_std": self.ssim_std,
            "perceptual_mean": self.perceptual_mean,
            "perceptual_std": self.perceptual_std,
            "perceptual_backend": self.perceptual_backend,
            "n_views": self.n_views,
        }


def _check_pair(a: GrayImage, b: GrayImage) -> None:
    if a.data.shape != b.data.shape:
        raise DimensionMismatch(f"image sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}")


def mse(a: GrayImage, b: GrayImage) -> float:
    _check_pair(a, b)
    d = a.data.astype(np.float64) - b.data.astype(np.float64)
    return float(np.mean(d * d))


def psnr_from_mse(value: float) -> float:
    if value == 0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / value)


def psnr(a: GrayImage, b: GrayImage) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical images."""
    return psnr_from_mse(mse(a, b))


def _ssim_windows(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    h, w = x.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise TooSmall(f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}")
    wx = sliding_window_view(x, (SSIM_WINDOW, SSIM_WINDOW))[::SSIM_STRIDE, ::SSIM_STRIDE]
    wy = sliding_window_view(y, (SSIM_WINDOW, SSIM_WINDOW))[::SSIM_STRIDE, ::SSIM_STRIDE]
    mx = wx.mean(axis=(-1, -2))
    my = wy.mean(axis=(-1, -2))
    vx = (wx * wx).mean(axis=(-1, -2)) - mx * mx
    vy = (wy * wy).mean(axis=(-1, -2)) - my * my
    cxy = (wx * wy).mean(axis=(-1, -2)) - mx * my
    num = (2 * mx * my + C1) * (2 * cxy + C2)
    den = (mx * mx + my * my + C1) * (vx + vy + C2)
    return (num / den).ravel()


def ssim(a: GrayImage, b: GrayImage) -> tuple[float, np.ndarray]:
    """Mean SSIM over 8x8 uniform windows at stride 4, plus the per-window values."""
    _check_pair(a, b)
    per_window = _ssim_windows(a.data.astype(np.float64), b.data.astype(np.float64))
    return float(per_window.mean()), per_window


def _halve(x: np.ndarray) -> np.ndarray:
    h, w = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
    x = x[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


class SSIMProxyBackend:
    """Non-learned stand-in for LPIPS: mean over 3 dyadic scales of (1 - SSIM) / 2.

    Scales are the full image and two successive 2x2 average poolings, so
    the input must be at least 32x32.
    """

    name = "proxy"
    n_scales = 3

    def distance(self, a: GrayImage, b: GrayImage) -> float:
        _check_pair(a, b)
        x = a.data.astype(np.float64)
        y = b.data.astype(np.float64)
        if np.array_equal(x, y):
            return 0.0
        vals = []
        for level in range(self.n_scales):
            if level:
                x, y = _halve(x), _halve(y)
            vals.append((1.0 - float(_ssim_windows(x, y).mean())) / 2.0)
        return float(np.clip(np.mean(vals), 0.0, 1.0))


class CallableBackend:
    """Adapter for an externally supplied distance function (e.g. a learned model)."""

    def __init__(self, fn: Callable[[np.ndarray, np.ndarray], float], name: str = "external"):
        self._fn = fn
        self.name = name

    def distance(self, a: GrayImage, b: GrayImage) -> float:
        _check_pair(a, b)
        try:
            value = float(self._fn(np.asarray(a.data), np.asarray(b.data)))
        except Exception as exc:
            raise BackendFailure(f"{self.name}: {exc}") from exc
        if not math.isfinite(value) or value < 0:
            raise BackendFailure(f"{self.name} returned invalid distance {value!r}")
        return value


def load_backend(spec: str) -> PerceptualBackend:
    """Resolve a ``perceptual.backend`` config value: ``proxy`` or ``external:<module-or-file>``.

    An external target is a Python file or importable module exposing
    ``distance(a, b) -> float`` over two uint8 arrays.
    """
    if spec in ("", "proxy"):
        return SSIMProxyBackend()
    if not spec.startswith("external:"):
        raise BackendFailure(f"unknown perceptual backend {spec!r}")
    target = spec.split(":", 1)[1]
    try:
        import importlib
        import importlib.util

        if target.endswith(".py"):
            mod_spec = importlib.util.spec_from_file_location("_reconeval_backend", target)
            if mod_spec is None or mod_spec.loader is None:
                raise ImportError(target)
            module = importlib.util.module_from_spec(mod_spec)
            mod_spec.loader.exec_module(module)
        else:
            module = importlib.import_module(target)
        fn = module.distance
    except Exception as exc:
        raise BackendFailure(f"cannot load external backend {target!r}: {exc}") from exc
    return CallableBackend(fn, name=f"external:{target}")


def perceptual_distance(a: GrayImage, b: GrayImage, backend: PerceptualBackend | None = None) -> float:
    backend = backend or SSIMProxyBackend()
    _check_pair(a, b)
    try:
        value = backend.distance(a, b)
    except (DimensionMismatch, TooSmall, BackendFailure):
        raise
    except Exception as exc:
        raise BackendFailure(str(exc)) from exc
    return float(value)


def aggregate_image_metrics(
    pairs: Sequence[tuple[GrayImage, GrayImage]],
    backend: PerceptualBackend | None = None,
) -> ImageMetricSet:
    """PSNR from the MSE pooled over every pixel of every pair; SSIM and perceptual as mean and std over pairs."""
    if not pairs:
        raise EmptyInput("no image pairs to evaluate")
    backend = backend or SSIMProxyBackend()
    sq_sum = 0.0
    n_px = 0
    ssims, percs = [], []
    for a, b in pairs:
        sq_sum += mse(a, b) * a.data.size
        n_px += a.data.size
        ssims.append(ssim(a, b)[0])
        percs.append(perceptual_distance(a, b, backend))
    ssims_a = np.asarray(ssims)
    percs_a = np.asarray(percs)
    return ImageMetricSet(
        psnr_db=psnr_from_mse(sq_sum / n_px),
        ssim_mean=float(ssims_a.mean()),
        ssim_std=float(ssims_a.std()),
        perceptual_mean=float(percs_a.mean()),
        perceptual_std=float(percs_a.std()),
        n_views=len(pairs),
        perceptual_backend=getattr(backend, "name", type(backend).__name__),
    )
