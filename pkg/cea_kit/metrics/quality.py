"""PSNR and SSIM on [0, peak] images (RGB or single channel)."""
import math

import numpy as np
from scipy.ndimage import correlate1d

from cea_kit.autograd.tensor import Tensor
from cea_kit.core.constants import SSIM_K1, SSIM_K2, SSIM_WINDOW_SIGMA, SSIM_WINDOW_SIZE
from cea_kit.core.errors import DimensionError


def _array(x: Tensor | np.ndarray) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def psnr(pred: Tensor | np.ndarray, target: Tensor | np.ndarray, peak: float = 1.0) -> float:
    """``10 log10(peak^2 / MSE)``; identical images give ``inf``."""
    p, t = _array(pred), _array(target)
    if p.shape != t.shape:
        raise DimensionError(f"psnr: shapes {p.shape} and {t.shape} differ")
    mse = float(np.mean((p - t) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size: int = SSIM_WINDOW_SIZE, sigma: float = SSIM_WINDOW_SIGMA) -> np.ndarray:
    """Normalized 1-D Gaussian taps (the 2-D window is their outer product)."""
    offsets = np.arange(size) - (size - 1) / 2.0
    taps = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def _filter_valid(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable Gaussian filter keeping only windows that lie inside the image."""
    radius = len(taps) // 2
    out = correlate1d(correlate1d(x, taps, axis=0, mode="constant"), taps, axis=1, mode="constant")
    return out[radius:-radius, radius:-radius] if radius else out


def ssim_map(p: np.ndarray, t: np.ndarray, peak: float = 1.0) -> np.ndarray:
    """Per-window SSIM of two single-channel images."""
    taps = gaussian_window()
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    mu_p = _filter_valid(p, taps)
    mu_t = _filter_valid(t, taps)
    var_p = _filter_valid(p * p, taps) - mu_p * mu_p
    var_t = _filter_valid(t * t, taps) - mu_t * mu_t
    cov = _filter_valid(p * t, taps) - mu_p * mu_t
    luminance = (2.0 * mu_p * mu_t + c1) / (mu_p * mu_p + mu_t * mu_t + c1)
    structure = (2.0 * cov + c2) / (var_p + var_t + c2)
    return luminance * structure


def ssim(pred: Tensor | np.ndarray, target: Tensor | np.ndarray, peak: float = 1.0) -> float:
    """Gaussian-window SSIM averaged over windows and channels, clipped to [-1, 1]."""
    p, t = _array(pred), _array(target)
    if p.shape != t.shape:
        raise DimensionError(f"ssim: shapes {p.shape} and {t.shape} differ")
    if p.ndim == 2:
        p, t = p[..., None], t[..., None]
    if p.ndim != 3:
        raise DimensionError(f"ssim expects H x W or H x W x C images, got {p.shape}")
    if min(p.shape[0], p.shape[1]) < SSIM_WINDOW_SIZE:
        raise DimensionError(f"ssim needs images of at least {SSIM_WINDOW_SIZE}x{SSIM_WINDOW_SIZE}, got {p.shape[:2]}")
    values = [float(ssim_map(p[..., c], t[..., c], peak).mean()) for c in range(p.shape[2])]
    return float(np.clip(np.mean(values), -1.0, 1.0))
