"""Training objective, image-quality metrics and paired bootstrap."""
from cea_kit.metrics.bootstrap import paired_bootstrap
from cea_kit.metrics.losses import fft_loss, loss_total, smooth_target
from cea_kit.metrics.quality import psnr, ssim

__all__ = ["fft_loss", "loss_total", "paired_bootstrap", "psnr", "smooth_target", "ssim"]
