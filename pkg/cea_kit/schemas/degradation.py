"""Synthetic degradation schemas."""
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from cea_kit.core.constants import DEFAULT_IMAGE_SIZE


class DegradationType(str, Enum):
    """Operator kinds; the value is the single-letter category code."""

    NOISE = "N"
    HAZE = "H"
    LOWLIGHT = "L"
    RAIN = "R"
    BLUR = "B"
    SNOW = "S"


class CategoryFamily(str, Enum):
    """Category mix used when generating a dataset."""

    CDD11 = "cdd11"
    AIO5 = "aio5"


# name -> (low, high) for every parameter; bounds are inclusive
PARAMETER_RANGES: dict[DegradationType, dict[str, tuple[float, float]]] = {
    DegradationType.NOISE: {"sigma": (0.0, 255.0)},
    DegradationType.HAZE: {"t0": (1e-6, 1.0), "airlight": (0.0, 1.0)},
    DegradationType.LOWLIGHT: {"gamma": (1.0, 10.0), "scale": (1e-6, 1.0)},
    DegradationType.RAIN: {"density": (0.0, 0.1), "angle": (-45.0, 45.0), "intensity": (0.0, 1.0), "length": (1.0, 64.0)},
    DegradationType.BLUR: {"kernel_sigma": (0.0, 10.0)},
    DegradationType.SNOW: {"density": (0.0, 0.1), "flake_size": (0.5, 8.0), "opacity": (0.0, 1.0)},
}


class DegradationStep(BaseModel):
    """One operator of a chain."""

    type: DegradationType = Field(description="Operator kind")
    params: dict[str, float] = Field(default_factory=dict, description="Operator parameters")
    seed: int = Field(default=0, ge=0, description="Seed of the operator's random stream")

    model_config = ConfigDict(frozen=True, extra="forbid")

    @model_validator(mode="after")
    def validate_params(self) -> "DegradationStep":
        ranges = PARAMETER_RANGES[self.type]
        unknown = set(self.params) - set(ranges)
        if unknown:
            raise ValueError(f"unknown parameters for {self.type.name.lower()}: {sorted(unknown)}")
        for name, value in self.params.items():
            low, high = ranges[name]
            if not low <= value <= high:
                raise ValueError(f"{self.type.name.lower()}.{name}={value} outside [{low}, {high}]")
        return self


class DegradationSpec(BaseModel):
    """Ordered operator chain applied to one clean image."""

    chain: tuple[DegradationStep, ...] = Field(description="Operators, applied left to right")
    seed: int = Field(default=0, ge=0, description="Item seed the step seeds were derived from")
    region: tuple[int, int, int, int] | None = Field(
        default=None, description="Optional (y0, x0, y1, x1) window confining the degradation"
    )

    model_config = ConfigDict(frozen=True, extra="forbid")

    @field_validator("chain")
    @classmethod
    def validate_length(cls, v: tuple[DegradationStep, ...]) -> tuple[DegradationStep, ...]:
        if not 1 <= len(v) <= 3:
            raise ValueError(f"a chain composes 1 to 3 operators, got {len(v)}")
        return v

    @model_validator(mode="after")
    def validate_region(self) -> "DegradationSpec":
        if self.region is not None:
            y0, x0, y1, x1 = self.region
            if not (0 <= y0 < y1 and 0 <= x0 < x1):
                raise ValueError(f"region {self.region} is empty or negative")
        return self

    @property
    def category(self) -> str:
        return "+".join(step.type.value for step in self.chain)


class DatasetConfig(BaseModel):
    """Procedural toy dataset."""

    n_items: int = Field(default=88, ge=0, description="Number of clean/degraded pairs")
    image_size: int = Field(default=DEFAULT_IMAGE_SIZE, ge=4, description="Square image side length")
    family: CategoryFamily = Field(default=CategoryFamily.CDD11, description="Category mix")
    test_fraction: float = Field(default=0.25, ge=0.0, le=1.0, description="Share of items in the test split")
    localized_fraction: float = Field(
        default=0.0, ge=0.0, le=1.0, description="Share of items whose degradation is confined to a window"
    )

    model_config = ConfigDict(frozen=True, extra="forbid")


class ManifestItem(BaseModel):
    """Manifest row of one dataset item."""

    id: str = Field(description="Item identifier (file stem)")
    split: str = Field(description="train or test")
    category: str = Field(description="Category code, e.g. 'L+H'")
    chain: tuple[DegradationStep, ...] = Field(description="Operators applied to the clean image")
    seed: int = Field(description="Item seed")
    region: tuple[int, int, int, int] | None = Field(default=None, description="Degradation window, if localized")

    @classmethod
    def from_spec(cls, item_id: str, split: str, spec: DegradationSpec) -> "ManifestItem":
        return cls(id=item_id, split=split, category=spec.category, chain=spec.chain, seed=spec.seed, region=spec.region)

    def to_spec(self) -> DegradationSpec:
        return DegradationSpec(chain=self.chain, seed=self.seed, region=self.region)


class DatasetManifest(BaseModel):
    """Contents of ``manifest.json``."""

    seed: int = Field(description="Global generation seed")
    config: DatasetConfig = Field(description="Generation config")
    items: list[ManifestItem] = Field(default_factory=list, description="Items in id order")

    def split(self, name: str) -> list[ManifestItem]:
        return [item for item in self.items if item.split == name]
