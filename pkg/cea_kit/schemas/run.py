"""Run configuration schemas."""
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, field_validator

from cea_kit.core.constants import (
    DEFAULT_BETAS,
    DEFAULT_LEARNING_RATE,
    DEFAULT_BATCH_SIZE,
    DEFAULT_MAX_STEPS,
)
from cea_kit.schemas.backbone import BackboneConfig
from cea_kit.schemas.objectives import LossConfig


class OptimizerConfig(BaseModel):
    """Adam with cosine learning-rate decay to zero."""

    lr: float = Field(default=DEFAULT_LEARNING_RATE, gt=0.0, description="Initial learning rate")
    betas: tuple[float, float] = Field(default=DEFAULT_BETAS, description="Adam (beta1, beta2)")
    epochs: int = Field(default=25, ge=0, description="Passes over the train split")
    batch_size: int = Field(default=DEFAULT_BATCH_SIZE, ge=1, description="Images per optimizer step")
    max_steps: int | None = Field(default=DEFAULT_MAX_STEPS, ge=0, description="Optional cap on optimizer steps")
    flips: bool = Field(default=True, description="Random horizontal/vertical flips")

    model_config = ConfigDict(frozen=True, extra="forbid")

    @field_validator("betas")
    @classmethod
    def validate_betas(cls, v: tuple[float, float]) -> tuple[float, float]:
        if not all(0.0 <= b < 1.0 for b in v):
            raise ValueError(f"betas must lie in [0, 1), got {v}")
        return v


class RunConfig(BaseModel):
    """Everything a training/evaluation run depends on."""

    backbone: BackboneConfig = Field(default_factory=BackboneConfig, description="Network geometry and CEA")
    loss: LossConfig = Field(default_factory=LossConfig, description="Objective weights")
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig, description="Optimizer recipe")
    dataset: Path | None = Field(default=None, description="Dataset directory (manifest.json inside)")
    seed: int = Field(default=0, ge=0, description="Seed for initialization, shuffling and flips")
    output_dir: Path | None = Field(default=None, description="Run directory")
    threads: int = Field(default=1, ge=1, description="Worker threads (1 = bitwise reproducible)")

    model_config = ConfigDict(frozen=True, extra="forbid")


class RunArtifacts(BaseModel):
    """Files written by a training run."""

    run_dir: Path = Field(description="Run directory")
    checkpoint: Path = Field(description="Named-entry tensor container")
    config: Path = Field(description="JSON copy of the RunConfig")
    loss_log: Path = Field(description="Per-step loss CSV")
    metrics: dict[str, Path] = Field(default_factory=dict, description="MetricRecord CSV per split")
    flops: Path = Field(description="Cost and parameter report JSON")
    environment: Path = Field(description="Seed, versions and settings record")
    initial_loss: float | None = Field(default=None, description="Mean loss of the first step")
    final_loss: float | None = Field(default=None, description="Mean loss of the last step")
    steps: int = Field(default=0, description="Optimizer steps taken")
