"""Operator chains."""
from collections.abc import Callable

import numpy as np

from cea_kit.degradations.operators import (
    apply_blur,
    apply_haze,
    apply_lowlight,
    apply_noise,
    apply_rain,
    apply_snow,
)
from cea_kit.schemas.degradation import DegradationSpec, DegradationStep, DegradationType

_RANDOM: dict[DegradationType, Callable[..., np.ndarray]] = {
    DegradationType.NOISE: apply_noise,
    DegradationType.HAZE: apply_haze,
    DegradationType.RAIN: apply_rain,
    DegradationType.SNOW: apply_snow,
}
_DETERMINISTIC: dict[DegradationType, Callable[..., np.ndarray]] = {
    DegradationType.LOWLIGHT: apply_lowlight,
    DegradationType.BLUR: apply_blur,
}


def apply_step(y: np.ndarray, step: DegradationStep) -> np.ndarray:
    """Apply one operator with a random stream seeded by ``step.seed``."""
    if step.type in _RANDOM:
        return _RANDOM[step.type](y, **step.params, rng=np.random.default_rng(step.seed))
    return _DETERMINISTIC[step.type](y, **step.params)


def compose(spec: DegradationSpec, y: np.ndarray) -> np.ndarray:
    """Apply the chain left to right; with a region, only that window is degraded."""
    x = np.asarray(y, dtype=np.float64)
    for step in spec.chain:
        x = apply_step(x, step)
    if spec.region is None:
        return x
    y0, x0, y1, x1 = spec.region
    out = np.array(y, dtype=np.float64, copy=True)
    out[y0:y1, x0:x1] = x[y0:y1, x0:x1]
    return out
