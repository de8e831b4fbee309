"""Reconstruction objective: pixel L1 plus Fourier-magnitude L1."""
import numpy as np

from cea_kit.autograd import functional as F
from cea_kit.autograd.tensor import Tensor, as_tensor
from cea_kit.core.errors import DimensionError
from cea_kit.schemas.objectives import LossConfig


def _channels_last(x: Tensor) -> Tensor:
    return x.reshape(x.shape[0], x.shape[1], 1) if x.ndim == 2 else x


def fft_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean ``| |FFT2(pred)| - |FFT2(target)| |`` over frequencies and channels (unnormalized DFT)."""
    pred_mag = F.fft_magnitude(_channels_last(as_tensor(pred)))
    target_mag = F.fft_magnitude(_channels_last(as_tensor(target)).detach())
    return F.absolute(pred_mag - target_mag).mean()


def loss_total(pred: Tensor, target: Tensor, cfg: LossConfig | None = None) -> Tensor:
    """``mean|pred - target| + lambda_f * fft_loss``; accepts H x W or H x W x C."""
    cfg = cfg or LossConfig()
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {pred.shape} and target {target.shape} differ in shape")
    if pred.ndim not in (2, 3):
        raise DimensionError(f"loss expects H x W or H x W x C images, got {pred.shape}")
    reconstruction = F.absolute(pred - target.detach()).mean()
    if cfg.lambda_f == 0.0:
        return reconstruction
    return reconstruction + cfg.lambda_f * fft_loss(pred, target)


def smooth_target(reference: Tensor | np.ndarray) -> Tensor:
    """Target at which ``loss_total`` is differentiable near ``reference``.

    Every pixel difference is at most -1 and every Fourier-magnitude difference
    is bounded away from zero, so finite differences never cross a kink of
    either L1 term.
    """
    data = reference.data if isinstance(reference, Tensor) else np.asarray(reference, dtype=np.float64)
    # DC of the offset outweighs 3x any DC of the reference; other bins scale by 3
    return Tensor(3.0 * data + (4.0 * float(np.max(np.abs(data))) + 1.0))
