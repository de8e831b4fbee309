"""Analytic cost model of the restorer.

``flop_report`` walks the network in the same order as ``Restorer.forward``
and counts the multiply-accumulates of every dense primitive, so its total
equals what the runtime counter records for one forward pass.
"""
from __future__ import annotations

from cea_kit.autograd.functional import conv_output_size
from cea_kit.core.constants import GAP_MLP_HIDDEN_RATIO
from cea_kit.models.assembly import dense_macs, low_rank_macs
from cea_kit.models.attention import attention_macs
from cea_kit.models.backbone import Restorer
from cea_kit.models.hyper_adapter import GapMlpWeights, TargetDims
from cea_kit.schemas.backbone import BackboneConfig
from cea_kit.schemas.cea import CeaConfig, FactorGenerator, FactorSource, Target
from cea_kit.schemas.reports import CeaCost, FlopEntry, FlopReport


def _target_dims(channels: int, ffn_ratio: int, cea: CeaConfig) -> TargetDims:
    dims = {Target.Q: (channels, channels), Target.K: (channels, channels), Target.V: (channels, channels)}
    dims[Target.FFN_IN] = (channels, ffn_ratio * channels)
    return {t: dims[t] for t in cea.injection_targets}


def generator_macs(height: int, width: int, channels: int, cea: CeaConfig, dims: TargetDims) -> dict[str, int]:
    """MACs of one factor generation, per sub-layer."""
    c, r = channels, cea.rank
    if cea.factor_source == FactorSource.STATIC:
        return {}
    if cea.generator == FactorGenerator.GAP_MLP:
        hidden = GAP_MLP_HIDDEN_RATIO * c
        return {
            "gap_mlp.fc1": c * hidden,
            "gap_mlp.fc2": hidden * GapMlpWeights.output_width(dims, r),
        }
    s = cea.condense_stride
    m = conv_output_size(height, 3, s, 1) * conv_output_size(width, 3, s, 1)
    decode = sum(r * c * d_in + r * c * d_out for d_in, d_out in dims.values())
    return {
        "adapter.depthwise": m * c * 9,
        "adapter.pointwise": m * c * c,
        "adapter.q_proj": 2 * r * c * c,
        "adapter.kv_proj": 2 * m * c * c,
        "adapter.cross_attention": attention_macs(2 * r, m, c),
        "adapter.out_proj": 2 * r * c * c,
        "adapter.decode": decode,
    }


def flop_report(config: BackboneConfig, height: int, width: int) -> FlopReport:
    """Per sub-layer MACs of one forward pass on an ``height x width`` image."""
    entries: list[FlopEntry] = []
    sites: list[CeaCost] = []

    def add(stage: str, sublayer: str, macs: int) -> None:
        entries.append(FlopEntry(stage=stage, sublayer=sublayer, macs=int(macs)))

    def blocks(prefix: str, count: int, level: int, h: int, w: int, cea_stage: bool = False) -> None:
        n, c = h * w, config.channels(level)
        hidden = config.ffn_ratio * c
        for j in range(count):
            name = f"{prefix}.block{j}"
            if cea_stage and config.is_cea_block(j):
                dims = _target_dims(c, config.ffn_ratio, config.cea)
                for sublayer, macs in generator_macs(h, w, c, config.cea, dims).items():
                    add(name, sublayer, macs)
                for target, (d_in, d_out) in dims.items():
                    low = low_rank_macs(n, d_in, d_out, config.cea.rank)
                    add(name, f"cea_assembly.{target.value}", low)
                    sites.append(
                        CeaCost(
                            stage=name,
                            target=target.value,
                            tokens=n,
                            d_in=d_in,
                            d_out=d_out,
                            rank=config.cea.rank,
                            low_rank_macs=low,
                            dense_macs=dense_macs(n, d_in, d_out),
                        )
                    )
            add(name, "qkv", 3 * n * c * c)
            add(name, "attention", attention_macs(n, n, c))
            add(name, "attn_out", n * c * c)
            add(name, "ffn", 2 * n * c * hidden)

    depth = config.depth
    add("embed", "pointwise", height * width * 3 * config.channels(0))
    h, w = height, width
    for level in range(depth):
        blocks(f"encoder.{level}", config.encoder_blocks[level], level, h, w)
        h, w = (h + 1) // 2, (w + 1) // 2
        add(f"down.{level}", "pointwise", h * w * config.channels(level) * config.channels(level + 1))

    blocks("latent", config.latent_blocks, depth, h, w)

    for stage in range(depth):
        level = config.decoder_level(stage)
        h, w = 2 * h, 2 * w
        c = config.channels(level)
        add(f"up.{stage}", "pointwise", h * w * config.channels(level + 1) * c)
        add(f"fuse.{stage}", "pointwise", h * w * 2 * c * c)
        blocks(f"decoder.{stage}", config.decoder_blocks[stage], level, h, w, cea_stage=True)

    blocks("refine", config.refinement_blocks, 0, h, w)
    add("head", "pointwise", h * w * config.channels(0) * 3)

    return FlopReport(
        height=height,
        width=width,
        entries=entries,
        cea_sites=sites,
        total_macs=sum(e.macs for e in entries),
        cea_low_rank_macs=sum(s.low_rank_macs for s in sites),
        cea_dense_macs=sum(s.dense_macs for s in sites),
        parameters=parameter_report(config),
    )


def parameter_report(config: BackboneConfig) -> dict[str, int]:
    """Parameter counts of the backbone and of the CEA factor sources."""
    store = Restorer(config).state
    groups = {"backbone": 0, "cea_generators": 0, "static_factors": 0}
    static = config.cea.factor_source == FactorSource.STATIC
    for name in store:
        size = store[name].size
        if ".cea." not in name:
            groups["backbone"] += size
        elif static:
            groups["static_factors"] += size
        else:
            groups["cea_generators"] += size
    groups["total"] = sum(groups.values())
    return groups
