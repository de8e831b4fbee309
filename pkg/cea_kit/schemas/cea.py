"""Continuous expert assembly schemas."""
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from cea_kit.core.constants import (
    DEFAULT_ADAPTER_HEADS,
    DEFAULT_CONDENSE_STRIDE,
    DEFAULT_INJECTION_TARGETS,
    DEFAULT_RANK,
    DEFAULT_RANK_NORM_EPSILON,
    DEFAULT_TOP_K,
)


class Target(str, Enum):
    """Base projection receiving the assembled residual."""

    Q = "Q"
    K = "K"
    V = "V"
    FFN_IN = "FFN_in"


class RoutingRule(str, Enum):
    """How token affinities weight the rank components."""

    DENSE_SIGNED = "dense_signed"
    TOPK_SOFTMAX = "topk_softmax"


class FactorSource(str, Enum):
    """Where the low-rank factors come from."""

    DYNAMIC = "dynamic"
    STATIC = "static"


class FactorGenerator(str, Enum):
    """Generator used by the dynamic factor source."""

    CROSS_ATTENTION = "cross_attention"
    GAP_MLP = "gap_mlp"


class CeaConfig(BaseModel):
    """Configuration of one CEA injection site (shared by every CEA block)."""

    rank: int = Field(default=DEFAULT_RANK, ge=1, description="Number of rank components r")
    alpha: float | None = Field(
        default=None, gt=0.0, description="Residual scale for dense signed routing (default 1/r)"
    )
    epsilon: float = Field(default=DEFAULT_RANK_NORM_EPSILON, gt=0.0, description="RankNorm floor added to norms")
    routing_rule: RoutingRule = Field(default=RoutingRule.DENSE_SIGNED, description="Routing rule")
    top_k: int = Field(default=DEFAULT_TOP_K, ge=1, description="Components kept by top-k softmax routing")
    factor_source: FactorSource = Field(default=FactorSource.DYNAMIC, description="Dynamic or static factors")
    generator: FactorGenerator = Field(
        default=FactorGenerator.CROSS_ATTENTION, description="Dynamic factor generator"
    )
    injection_targets: tuple[Target, ...] = Field(
        default=tuple(Target(t) for t in DEFAULT_INJECTION_TARGETS),
        description="Projections receiving the residual (empty = backbone only)",
    )
    rank_norm: bool = Field(default=True, description="Apply RankNorm before assembly")
    condense_stride: int = Field(default=DEFAULT_CONDENSE_STRIDE, ge=1, description="Condensation stride s_c")
    adapter_heads: int = Field(default=DEFAULT_ADAPTER_HEADS, ge=1, description="Cross-attention heads")

    model_config = ConfigDict(frozen=True, extra="forbid")

    @field_validator("injection_targets", mode="before")
    @classmethod
    def order_targets(cls, v: object) -> object:
        """Accept any iterable/'Q+K' string and store targets in canonical order."""
        if isinstance(v, str):
            v = [part for part in v.replace(",", "+").split("+") if part and part.lower() != "none"]
        if isinstance(v, (list, tuple, set, frozenset)):
            values = {Target(t) for t in v}
            return tuple(t for t in Target if t in values)
        return v

    @model_validator(mode="after")
    def validate_top_k(self) -> "CeaConfig":
        if self.routing_rule == RoutingRule.TOPK_SOFTMAX and not 1 <= self.top_k <= self.rank:
            raise ValueError(f"top-k softmax routing needs 1 <= k <= r, got k={self.top_k}, r={self.rank}")
        return self

    @property
    def scale(self) -> float:
        """Effective alpha."""
        return self.alpha if self.alpha is not None else 1.0 / self.rank

    @property
    def enabled(self) -> bool:
        return bool(self.injection_targets)

    def targets_label(self) -> str:
        return "+".join(t.value for t in self.injection_targets) or "none"
