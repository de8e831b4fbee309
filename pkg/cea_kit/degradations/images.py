"""Procedural clean images: gradients, checkerboards, smooth fields and shapes."""
import math

import numpy as np
from scipy.ndimage import gaussian_filter

IMAGE_KINDS = ("gradient", "checkerboard", "smooth_field", "shapes")


def gradient(size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.meshgrid(np.linspace(0.0, 1.0, size), np.linspace(0.0, 1.0, size), indexing="ij")
    theta = rng.uniform(0.0, 2.0 * math.pi)
    ramp = (math.cos(theta) * xx + math.sin(theta) * yy + 1.0) / 2.0
    low, high = rng.uniform(0.05, 0.35, size=3), rng.uniform(0.65, 0.95, size=3)
    return low + (high - low) * ramp[..., None]


def checkerboard(size: int, rng: np.random.Generator) -> np.ndarray:
    cell = int(rng.integers(2, max(3, size // 4) + 1))
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    board = ((yy // cell + xx // cell) % 2).astype(np.float64)
    dark, light = rng.uniform(0.05, 0.3, size=3), rng.uniform(0.7, 0.95, size=3)
    return dark + (light - dark) * board[..., None]


def smooth_field(size: int, rng: np.random.Generator) -> np.ndarray:
    field = gaussian_filter(rng.normal(size=(size, size, 3)), sigma=(size / 8.0, size / 8.0, 0.0), mode="wrap")
    field -= field.min(axis=(0, 1), keepdims=True)
    field /= np.maximum(field.max(axis=(0, 1), keepdims=True), 1e-12)
    return 0.1 + 0.8 * field


def shapes(size: int, rng: np.random.Generator) -> np.ndarray:
    image = np.ones((size, size, 3)) * rng.uniform(0.2, 0.8, size=3)
    yy, xx = np.meshgrid(np.arange(size) + 0.5, np.arange(size) + 0.5, indexing="ij")
    for _ in range(int(rng.integers(2, 5))):
        color = rng.uniform(0.05, 0.95, size=3)
        if rng.random() < 0.5:
            cy, cx = rng.uniform(0, size, size=2)
            radius = rng.uniform(size / 8.0, size / 3.0)
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
        else:
            y0, x0 = rng.integers(0, size - 2, size=2)
            h, w = rng.integers(2, size // 2 + 2, size=2)
            mask = np.zeros((size, size), dtype=bool)
            mask[y0 : y0 + h, x0 : x0 + w] = True
        image[mask] = color
    return image


_GENERATORS = {"gradient": gradient, "checkerboard": checkerboard, "smooth_field": smooth_field, "shapes": shapes}


def make_clean_image(size: int, rng: np.random.Generator, kind: str | None = None) -> np.ndarray:
    """One ``size x size x 3`` image in [0, 1]; ``kind`` defaults to a random choice."""
    kind = kind or IMAGE_KINDS[int(rng.integers(len(IMAGE_KINDS)))]
    return np.clip(_GENERATORS[kind](size, rng), 0.0, 1.0)
