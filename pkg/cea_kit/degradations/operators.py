"""Parameterized degradation operators on H x W x 3 images in [0, 1].

Every operator is the identity at its default parameters, never changes the
image shape, and clips its output to [0, 1]. Random operators draw from the
``numpy.random.Generator`` they are given.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import gaussian_filter

from cea_kit.core.errors import ConfigError, DimensionError
from cea_kit.schemas.degradation import PARAMETER_RANGES, DegradationType

DEFAULT_RAIN_LENGTH = 8
HAZE_MODES = 3


def check_params(kind: DegradationType, **params: float) -> None:
    """Raise ``ConfigError`` for parameters outside the documented range."""
    ranges = PARAMETER_RANGES[kind]
    for name, value in params.items():
        low, high = ranges[name]
        if not low <= value <= high:
            raise ConfigError(f"{kind.name.lower()}.{name}={value} outside [{low}, {high}]")


def _check_image(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 3:
        raise DimensionError(f"degradations expect H x W x C images, got {y.shape}")
    return y


def _rng(rng: np.random.Generator | None) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng(0)


def apply_noise(y: np.ndarray, sigma: float = 0.0, rng: np.random.Generator | None = None) -> np.ndarray:
    """Additive Gaussian noise; ``sigma`` is on the 0-255 scale."""
    check_params(DegradationType.NOISE, sigma=sigma)
    y = _check_image(y)
    if sigma == 0.0:
        return y.copy()
    noise = _rng(rng).normal(0.0, sigma / 255.0, size=y.shape)
    return np.clip(y + noise, 0.0, 1.0)


def transmission_field(height: int, width: int, t0: float, rng: np.random.Generator) -> np.ndarray:
    """Smooth field in [t0, 1]: sum of low-frequency cosine modes, min-max mapped."""
    yy, xx = np.meshgrid(np.arange(height) / height, np.arange(width) / width, indexing="ij")
    field = np.zeros((height, width))
    for _ in range(HAZE_MODES):
        fy, fx = rng.uniform(0.25, 1.5, size=2)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        amplitude = rng.uniform(0.5, 1.0)
        field += amplitude * np.cos(2.0 * math.pi * (fy * yy + fx * xx) + phase)
    span = field.max() - field.min()
    if t0 >= 1.0 or span == 0.0:
        return np.ones((height, width))
    return t0 + (1.0 - t0) * (field - field.min()) / span


def apply_haze(
    y: np.ndarray,
    t0: float = 1.0,
    airlight: float = 1.0,
    rng: np.random.Generator | None = None,
    transmission: np.ndarray | float | None = None,
) -> np.ndarray:
    """Atmospheric scattering ``x = y t + A (1 - t)`` with a spatially varying ``t``."""
    check_params(DegradationType.HAZE, t0=t0, airlight=airlight)
    y = _check_image(y)
    if transmission is None:
        t = transmission_field(y.shape[0], y.shape[1], t0, _rng(rng))
    else:
        t = np.broadcast_to(np.asarray(transmission, dtype=np.float64), y.shape[:2])
    t = t[..., None]
    return np.clip(y * t + airlight * (1.0 - t), 0.0, 1.0)


def apply_lowlight(y: np.ndarray, gamma: float = 1.0, scale: float = 1.0) -> np.ndarray:
    """``x = scale * y**gamma``."""
    check_params(DegradationType.LOWLIGHT, gamma=gamma, scale=scale)
    y = _check_image(y)
    return np.clip(scale * np.power(y, gamma), 0.0, 1.0)


def rain_mask(
    height: int, width: int, density: float, angle: float, length: int, rng: np.random.Generator
) -> np.ndarray:
    """Binary streak mask: Poisson(density*H*W) streaks of one pixel per row, wrapping at borders."""
    mask = np.zeros((height, width))
    count = rng.poisson(density * height * width)
    slope = math.tan(math.radians(angle))
    rows = np.arange(length)
    offsets = np.round(rows * slope).astype(int)
    for _ in range(count):
        y0 = rng.integers(0, height)
        x0 = rng.integers(0, width)
        mask[(y0 + rows) % height, (x0 + offsets) % width] = 1.0
    return mask


def apply_rain(
    y: np.ndarray,
    density: float = 0.0,
    angle: float = 0.0,
    intensity: float = 0.7,
    length: float = DEFAULT_RAIN_LENGTH,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Oriented white streaks alpha-blended with weight ``intensity``."""
    check_params(DegradationType.RAIN, density=density, angle=angle, intensity=intensity, length=length)
    y = _check_image(y)
    if density == 0.0:
        return y.copy()
    alpha = intensity * rain_mask(y.shape[0], y.shape[1], density, angle, int(round(length)), _rng(rng))[..., None]
    return np.clip(y * (1.0 - alpha) + alpha, 0.0, 1.0)


def apply_blur(y: np.ndarray, kernel_sigma: float = 0.0) -> np.ndarray:
    """Isotropic Gaussian blur with reflect padding."""
    check_params(DegradationType.BLUR, kernel_sigma=kernel_sigma)
    y = _check_image(y)
    if kernel_sigma == 0.0:
        return y.copy()
    return np.clip(gaussian_filter(y, sigma=(kernel_sigma, kernel_sigma, 0.0), mode="reflect"), 0.0, 1.0)


def snow_mask(
    height: int, width: int, density: float, flake_size: float, rng: np.random.Generator
) -> np.ndarray:
    """Binary mask of Poisson(density*H*W) discs of diameter ``flake_size``."""
    mask = np.zeros((height, width))
    count = rng.poisson(density * height * width)
    radius = flake_size / 2.0
    yy, xx = np.meshgrid(np.arange(height) + 0.5, np.arange(width) + 0.5, indexing="ij")
    for _ in range(count):
        cy, cx = rng.uniform(0.0, height), rng.uniform(0.0, width)
        mask[(yy - cy) ** 2 + (xx - cx) ** 2 <= radius * radius] = 1.0
    return mask


def apply_snow(
    y: np.ndarray,
    density: float = 0.0,
    flake_size: float = 1.5,
    opacity: float = 0.8,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """White discs alpha-blended with weight ``opacity``."""
    check_params(DegradationType.SNOW, density=density, flake_size=flake_size, opacity=opacity)
    y = _check_image(y)
    if density == 0.0:
        return y.copy()
    alpha = opacity * snow_mask(y.shape[0], y.shape[1], density, flake_size, _rng(rng))[..., None]
    return np.clip(y * (1.0 - alpha) + alpha, 0.0, 1.0)
