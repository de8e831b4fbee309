"""Training objective and evaluation record schemas."""
import math

from pydantic import BaseModel, ConfigDict, Field, field_validator

from cea_kit.core.constants import DEFAULT_LAMBDA_F


class LossConfig(BaseModel):
    """Weights of the reconstruction objective."""

    lambda_f: float = Field(default=DEFAULT_LAMBDA_F, ge=0.0, description="Weight of the Fourier-magnitude term")

    model_config = ConfigDict(frozen=True, extra="forbid")


class MetricRecord(BaseModel):
    """Per-image quality row."""

    image_id: str = Field(description="Image identifier (join key for paired comparisons)")
    psnr_db: float = Field(description="PSNR in dB; +inf marks identical images")
    ssim: float = Field(ge=-1.0, le=1.0, description="Mean SSIM over channels")
    category: str | None = Field(default=None, description="Degradation category tag (e.g. 'L+H')")

    @field_validator("psnr_db")
    @classmethod
    def reject_nan(cls, v: float) -> float:
        if math.isnan(v):
            raise ValueError("psnr_db must not be NaN")
        return v

    @property
    def is_identical(self) -> bool:
        return math.isinf(self.psnr_db)


class BootstrapResult(BaseModel):
    """Paired bootstrap summary of per-image differences."""

    mean: float = Field(description="Mean of the observed differences")
    lo: float = Field(description="Lower percentile bound of the resampled means")
    hi: float = Field(description="Upper percentile bound of the resampled means")
    p_boot: float = Field(ge=0.0, le=1.0, description="Fraction of resampled means <= 0")
    p_boot_is_bound: bool = Field(
        default=False, description="True when no resampled mean was <= 0 (p_boot < 1/n_resamples)"
    )
    n: int = Field(ge=1, description="Number of paired differences")
    n_resamples: int = Field(ge=1, description="Bootstrap resamples")
    ci: float = Field(gt=0.0, lt=1.0, description="Confidence level")
    seed: int = Field(description="Seed of the resampling streams")

    def p_boot_label(self) -> str:
        if self.p_boot_is_bound:
            return f"< {1.0 / self.n_resamples:.0e}"
        return f"{self.p_boot:.4f}"
