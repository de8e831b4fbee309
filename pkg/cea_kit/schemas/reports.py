"""Report schemas returned by services and written as JSON."""
from typing import Any

from pydantic import BaseModel, Field

from cea_kit.schemas.objectives import BootstrapResult


class GradCheckEntry(BaseModel):
    """Finite-difference comparison for one parameter."""

    name: str = Field(description="Parameter name")
    checked: int = Field(description="Number of entries compared")
    max_rel_error: float = Field(description="Largest relative error")
    max_abs_error: float = Field(description="Largest absolute error")
    passed: bool = Field(description="max_rel_error <= tol")


class GradCheckReport(BaseModel):
    """Finite-difference comparison for a set of parameters."""

    eps: float = Field(description="Central-difference step")
    tol: float = Field(description="Relative error tolerance")
    entries: list[GradCheckEntry] = Field(default_factory=list, description="Per-parameter results")
    passed: bool = Field(description="Every entry passed")

    @property
    def max_rel_error(self) -> float:
        return max((e.max_rel_error for e in self.entries), default=0.0)


class FlopEntry(BaseModel):
    """MACs of one sub-layer."""

    stage: str = Field(description="Stage label, e.g. 'decoder.1.block0'")
    sublayer: str = Field(description="Sub-layer kind (qkv, attention, cea_assembly, ...)")
    macs: int = Field(description="Multiply-accumulates")


class CeaCost(BaseModel):
    """Assembly cost of one CEA site under both formulations."""

    stage: str = Field(description="Block label")
    target: str = Field(description="Injection target")
    tokens: int = Field(description="N")
    d_in: int = Field(description="Input width")
    d_out: int = Field(description="Output width")
    rank: int = Field(description="r")
    low_rank_macs: int = Field(description="N d_in r + N r d_out")
    dense_macs: int = Field(description="N d_in d_out")

    @property
    def ratio(self) -> float:
        return self.dense_macs / self.low_rank_macs


class FlopReport(BaseModel):
    """Analytic cost table of one restorer configuration."""

    height: int = Field(description="Input height")
    width: int = Field(description="Input width")
    entries: list[FlopEntry] = Field(default_factory=list, description="Per sub-layer MACs")
    cea_sites: list[CeaCost] = Field(default_factory=list, description="Per-site assembly cost")
    total_macs: int = Field(description="Sum over entries")
    cea_low_rank_macs: int = Field(description="Assembly MACs with two low-rank products")
    cea_dense_macs: int = Field(description="Assembly MACs with a materialized dense dynamic projection")
    parameters: dict[str, int] = Field(default_factory=dict, description="Parameter counts per group")

    @property
    def cea_ratio(self) -> float | None:
        if not self.cea_low_rank_macs:
            return None
        return self.cea_dense_macs / self.cea_low_rank_macs


class BenchPoint(BaseModel):
    """One benchmark grid point."""

    tokens: int = Field(description="N")
    d_in: int = Field(description="Input width")
    d_out: int = Field(description="Output width")
    rank: int = Field(description="r")
    low_rank_macs: int = Field(description="Analytic MACs of (X A) B")
    dense_macs: int = Field(description="Analytic MACs of X (A B)")
    mac_ratio: float = Field(description="dense / low-rank MACs")
    low_rank_seconds: float = Field(description="Median wall time of the low-rank path")
    dense_seconds: float = Field(description="Median wall time of the dense path (including materialization)")
    speedup: float = Field(description="dense_seconds / low_rank_seconds")


class BenchReport(BaseModel):
    """Cost table of a benchmark grid."""

    warmup: int = Field(description="Untimed iterations per point")
    repeats: int = Field(description="Timed iterations per point")
    points: list[BenchPoint] = Field(default_factory=list, description="Grid results")


class PropertyResult(BaseModel):
    """Outcome of one property suite."""

    name: str = Field(description="Suite name")
    passed: bool = Field(description="All cases passed")
    cases: int = Field(description="Number of cases evaluated")
    detail: str = Field(default="", description="Summary (worst error, counts...)")
    counterexample: dict[str, Any] | None = Field(default=None, description="First failing case, if any")


class PropertyReport(BaseModel):
    """Outcome of a property run."""

    fault: str | None = Field(default=None, description="Injected fault, if any")
    results: list[PropertyResult] = Field(default_factory=list, description="Suite outcomes")

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)


class GroupScore(BaseModel):
    """Mean PSNR/SSIM of a category group."""

    group: str = Field(description="Category or group name")
    psnr_db: float = Field(description="Mean PSNR")
    ssim: float = Field(description="Mean SSIM")
    count: int = Field(description="Images (categories) or categories (groups) averaged")


class EvaluationSummary(BaseModel):
    """Per-category and per-group means of one evaluation."""

    split: str = Field(description="Evaluated split")
    images: int = Field(description="Rows in the metric CSV")
    categories: list[GroupScore] = Field(default_factory=list, description="Category-wise means")
    groups: list[GroupScore] = Field(default_factory=list, description="Single/Double/Triple/Avg means")
    excluded_identical: int = Field(default=0, description="Images with infinite PSNR left out of the means")

    def group(self, name: str) -> GroupScore | None:
        return next((g for g in self.groups if g.group == name), None)


class BootstrapReport(BaseModel):
    """Paired comparison of two metric CSVs."""

    csv_a: str = Field(description="First CSV (differences are a - b)")
    csv_b: str = Field(description="Second CSV")
    pairs: int = Field(description="Matched image pairs")
    psnr: BootstrapResult = Field(description="PSNR difference")
    ssim: BootstrapResult = Field(description="SSIM difference")
    per_category_psnr: dict[str, float] = Field(
        default_factory=dict, description="Mean PSNR difference per category (when tagged)"
    )
    unweighted_category_mean_psnr: float | None = Field(
        default=None, description="Unweighted mean of the per-category PSNR differences"
    )


class AblationVariant(BaseModel):
    """One trained variant of a study."""

    name: str = Field(description="Variant label")
    changes: dict[str, Any] = Field(default_factory=dict, description="Dotted config keys that differ from base")
    seeds: list[int] = Field(default_factory=list, description="Training seeds")
    groups: list[GroupScore] = Field(default_factory=list, description="Median-over-seeds group scores")
    per_seed_avg_psnr: list[float] = Field(default_factory=list, description="Avg PSNR per seed")
    delta_psnr: float | None = Field(default=None, description="Avg PSNR minus the reference variant")
    bootstrap: BootstrapResult | None = Field(default=None, description="Reference minus this variant")


class AblationReport(BaseModel):
    """Results of one ablation study."""

    study: str = Field(description="Study name")
    axis: list[str] = Field(description="Dotted config keys varied by the study")
    reference: str = Field(description="Variant all deltas are relative to")
    dataset_sha256: str = Field(description="Hash of the dataset shared by every variant")
    variants: list[AblationVariant] = Field(default_factory=list, description="Variant results")

    def variant(self, name: str) -> AblationVariant | None:
        return next((v for v in self.variants if v.name == name), None)
