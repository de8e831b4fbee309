"""Instance-conditioned factor generators.

The cross-attention hyper-adapter condenses a block's input feature map with a
strided depthwise 3x3 + pointwise 1x1 convolution, probes the condensed tokens
with two sets of r learnable queries (one set for the routing bases, one for
the residual directions), and decodes the probed tokens with per-target
linear heads into ``A`` (d_in x r) and ``B`` (r x d_out).

The GAP+MLP generator predicts the same factors from a globally pooled
feature, and the static source keeps one learnable pair per block. All three
return factors through the same RankNorm step.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Union

from cea_kit.autograd import functional as F
from cea_kit.autograd.tensor import Tensor
from cea_kit.core.constants import GAP_MLP_HIDDEN_RATIO, RESIDUAL_HEAD_INIT_SCALE
from cea_kit.core.errors import ConfigError, DimensionError
from cea_kit.models.assembly import FactorPair, prepare_factors
from cea_kit.models.attention import multi_head_attention
from cea_kit.models.parameters import ParameterStore
from cea_kit.schemas.cea import CeaConfig, FactorGenerator, FactorSource, Target

logger = logging.getLogger(__name__)

# target -> (d_in, d_out)
TargetDims = dict[Target, tuple[int, int]]


# ============================================================================
# Weights
# ============================================================================


@dataclass(frozen=True)
class AdapterWeights:
    """Parameters of one cross-attention hyper-adapter."""

    depthwise: Tensor  # 3 x 3 x C
    pointwise: Tensor  # C x C
    queries_a: Tensor  # r x C
    queries_b: Tensor  # r x C
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    heads_a: dict[Target, Tensor]  # C x d_in
    heads_b: dict[Target, Tensor]  # C x d_out
    n_heads: int
    stride: int

    @property
    def d_model(self) -> int:
        return self.pointwise.shape[0]

    @property
    def rank(self) -> int:
        return self.queries_a.shape[0]

    def tensors(self) -> list[Tensor]:
        out = [self.depthwise, self.pointwise, self.queries_a, self.queries_b, self.wq, self.wk, self.wv, self.wo]
        for target in self.heads_a:
            out += [self.heads_a[target], self.heads_b[target]]
        return out

    @classmethod
    def create(cls, store: ParameterStore, prefix: str, channels: int, cfg: CeaConfig, dims: TargetDims) -> "AdapterWeights":
        c, r = channels, cfg.rank
        if c % cfg.adapter_heads:
            raise ConfigError(f"{cfg.adapter_heads} adapter heads do not divide {c} channels")
        return cls(
            depthwise=store.uniform(f"{prefix}.condense.depthwise", (3, 3, c), fan_in=9),
            pointwise=store.uniform(f"{prefix}.condense.pointwise", (c, c), fan_in=c),
            queries_a=store.uniform(f"{prefix}.queries_a", (r, c), fan_in=c),
            queries_b=store.uniform(f"{prefix}.queries_b", (r, c), fan_in=c),
            wq=store.uniform(f"{prefix}.attn.wq", (c, c), fan_in=c),
            wk=store.uniform(f"{prefix}.attn.wk", (c, c), fan_in=c),
            wv=store.uniform(f"{prefix}.attn.wv", (c, c), fan_in=c),
            wo=store.uniform(f"{prefix}.attn.wo", (c, c), fan_in=c),
            heads_a={t: store.uniform(f"{prefix}.head_a.{t.value}", (c, d_in), fan_in=c) for t, (d_in, _) in dims.items()},
            heads_b={
                t: store.uniform(f"{prefix}.head_b.{t.value}", (c, d_out), fan_in=c, scale=RESIDUAL_HEAD_INIT_SCALE)
                for t, (_, d_out) in dims.items()
            },
            n_heads=cfg.adapter_heads,
            stride=cfg.condense_stride,
        )


@dataclass(frozen=True)
class GapMlpWeights:
    """Two-layer MLP mapping a pooled feature to every target's raw factors."""

    w1: Tensor  # C x 2C
    w2: Tensor  # 2C x sum_t r (d_in + d_out)
    dims: TargetDims
    rank: int

    def tensors(self) -> list[Tensor]:
        return [self.w1, self.w2]

    @staticmethod
    def output_width(dims: TargetDims, rank: int) -> int:
        return sum(rank * (d_in + d_out) for d_in, d_out in dims.values())

    @classmethod
    def create(cls, store: ParameterStore, prefix: str, channels: int, cfg: CeaConfig, dims: TargetDims) -> "GapMlpWeights":
        hidden = GAP_MLP_HIDDEN_RATIO * channels
        return cls(
            w1=store.uniform(f"{prefix}.mlp.w1", (channels, hidden), fan_in=channels),
            w2=store.uniform(f"{prefix}.mlp.w2", (hidden, cls.output_width(dims, cfg.rank)), fan_in=hidden),
            dims=dict(dims),
            rank=cfg.rank,
        )


@dataclass(frozen=True)
class StaticFactorWeights:
    """Learnable raw factors shared by every input."""

    a: dict[Target, Tensor]  # d_in x r
    b: dict[Target, Tensor]  # r x d_out

    def tensors(self) -> list[Tensor]:
        out: list[Tensor] = []
        for target in self.a:
            out += [self.a[target], self.b[target]]
        return out

    @classmethod
    def create(cls, store: ParameterStore, prefix: str, cfg: CeaConfig, dims: TargetDims) -> "StaticFactorWeights":
        r = cfg.rank
        return cls(
            a={t: store.uniform(f"{prefix}.static_a.{t.value}", (d_in, r), fan_in=d_in) for t, (d_in, _) in dims.items()},
            b={
                t: store.uniform(f"{prefix}.static_b.{t.value}", (r, d_out), fan_in=r, scale=RESIDUAL_HEAD_INIT_SCALE)
                for t, (_, d_out) in dims.items()
            },
        )


GeneratorWeights = Union[AdapterWeights, GapMlpWeights, StaticFactorWeights]


def create_generator(store: ParameterStore, prefix: str, channels: int, cfg: CeaConfig, dims: TargetDims) -> GeneratorWeights:
    """Create the parameters of the factor source selected by ``cfg``."""
    if cfg.factor_source == FactorSource.STATIC:
        return StaticFactorWeights.create(store, prefix, cfg, dims)
    if cfg.generator == FactorGenerator.GAP_MLP:
        return GapMlpWeights.create(store, prefix, channels, cfg, dims)
    return AdapterWeights.create(store, prefix, channels, cfg, dims)


# ============================================================================
# Cross-attention hyper-adapter
# ============================================================================


@dataclass(frozen=True)
class CondensedFeatures:
    """Condensed tokens (h*w x C) and their grid."""

    tokens: Tensor
    height: int
    width: int


def condense(features: Tensor, weights: AdapterWeights, s_c: int | None = None) -> CondensedFeatures:
    """Strided depthwise 3x3 (padding 1) then pointwise 1x1, flattened to token rows."""
    stride = weights.stride if s_c is None else s_c
    if stride < 1:
        raise ConfigError(f"condensation stride must be >= 1, got {stride}")
    if features.ndim != 3 or features.shape[2] != weights.d_model:
        raise DimensionError(f"condense expects H x W x {weights.d_model} features, got {features.shape}")
    x = F.depthwise_conv2d(features, weights.depthwise, stride=stride, padding=1)
    x = F.pointwise_conv2d(x, weights.pointwise)
    h, w, c = x.shape
    return CondensedFeatures(tokens=x.reshape(h * w, c), height=h, width=w)


def probe(
    queries: Tensor,
    condensed: CondensedFeatures,
    weights: AdapterWeights,
    return_attention: bool = False,
) -> Tensor | tuple[Tensor, list[Tensor]]:
    """``T = R + CrossAttn(R, X_hat, X_hat)`` with output projection, no biases."""
    if queries.ndim != 2 or queries.shape[1] != weights.d_model:
        raise DimensionError(f"queries must be n x {weights.d_model}, got {queries.shape}")
    tokens = condensed.tokens
    q = F.matmul(queries, weights.wq)
    k = F.matmul(tokens, weights.wk)
    v = F.matmul(tokens, weights.wv)
    attended, attention = multi_head_attention(q, k, v, weights.n_heads)
    probed = queries + F.matmul(attended, weights.wo)
    if return_attention:
        return probed, attention
    return probed


def probe_pair(condensed: CondensedFeatures, weights: AdapterWeights) -> tuple[Tensor, Tensor]:
    """Probe with both query sets in one pass so keys/values are projected once."""
    r = weights.rank
    probed = probe(F.concat([weights.queries_a, weights.queries_b], axis=0), condensed, weights)
    return probed[:r], probed[r:]


def decode_factors(t_a: Tensor, t_b: Tensor, weights: AdapterWeights, target: Target) -> FactorPair:
    """Raw factors ``A = (T_A FC_A)^T`` and ``B = T_B FC_B`` for one target."""
    if target not in weights.heads_a or target not in weights.heads_b:
        raise ConfigError(f"no decoding head for target {target.value}")
    a = F.transpose(F.matmul(t_a, weights.heads_a[target]))
    b = F.matmul(t_b, weights.heads_b[target])
    return FactorPair(A=a, B=b, target=target)


def generate_dynamic(features: Tensor, weights: AdapterWeights, cfg: CeaConfig) -> dict[Target, FactorPair]:
    """Condense, probe, decode every configured target, then RankNorm."""
    if cfg.factor_source != FactorSource.DYNAMIC:
        raise ConfigError(f"dynamic generation requested with factor source {cfg.factor_source.value}")
    condensed = condense(features, weights, cfg.condense_stride)
    t_a, t_b = probe_pair(condensed, weights)
    return {t: prepare_factors(decode_factors(t_a, t_b, weights, t), cfg) for t in cfg.injection_targets}


def generate_dynamic_batch(
    batch: list[Tensor], weights: AdapterWeights, cfg: CeaConfig
) -> list[dict[Target, FactorPair]]:
    """Per-instance generation; samples never share normalization statistics."""
    return [generate_dynamic(features, weights, cfg) for features in batch]


# ============================================================================
# Baselines
# ============================================================================


def generate_gap_mlp(features: Tensor, weights: GapMlpWeights, cfg: CeaConfig) -> dict[Target, FactorPair]:
    """Global average pool, two-layer GELU MLP, reshape into factors, RankNorm."""
    if features.ndim == 3:
        h, w, c = features.shape
        features = features.reshape(h * w, c)
    pooled = F.global_avg_pool(features)
    hidden = F.gelu(F.matmul(pooled, weights.w1))
    flat = F.matmul(hidden, weights.w2)

    r = weights.rank
    factors: dict[Target, FactorPair] = {}
    offset = 0
    for target, (d_in, d_out) in weights.dims.items():
        a = flat[0, offset : offset + r * d_in].reshape(r, d_in)
        offset += r * d_in
        b = flat[0, offset : offset + r * d_out].reshape(r, d_out)
        offset += r * d_out
        if target in cfg.injection_targets:
            factors[target] = prepare_factors(FactorPair(A=F.transpose(a), B=b, target=target), cfg)
    return factors


def generate_static(weights: StaticFactorWeights, cfg: CeaConfig) -> dict[Target, FactorPair]:
    return {t: prepare_factors(FactorPair(A=weights.a[t], B=weights.b[t], target=t), cfg) for t in cfg.injection_targets}


def generate_factors(features: Tensor, weights: GeneratorWeights, cfg: CeaConfig) -> dict[Target, FactorPair]:
    """Factors for every injection target from the configured source."""
    if isinstance(weights, StaticFactorWeights):
        return generate_static(weights, cfg)
    if isinstance(weights, GapMlpWeights):
        return generate_gap_mlp(features, weights, cfg)
    return generate_dynamic(features, weights, cfg)
