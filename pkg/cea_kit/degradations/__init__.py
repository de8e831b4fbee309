"""Synthetic degradations, operator chains and the toy dataset."""
from cea_kit.degradations.compose import apply_step, compose
from cea_kit.degradations.dataset import ToyDataset, dataset_sha256, generate_dataset
from cea_kit.degradations.operators import (
    apply_blur,
    apply_haze,
    apply_lowlight,
    apply_noise,
    apply_rain,
    apply_snow,
)

__all__ = [
    "ToyDataset",
    "apply_blur",
    "apply_haze",
    "apply_lowlight",
    "apply_noise",
    "apply_rain",
    "apply_snow",
    "apply_step",
    "compose",
    "dataset_sha256",
    "generate_dataset",
]
