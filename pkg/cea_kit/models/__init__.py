"""Assembly, factor generators, restorer network and cost model."""
from cea_kit.models.assembly import (
    FactorPair,
    assemble_residual,
    assemble_residual_matrix,
    assemble_residual_tokenwise,
    assemble_residual_topk,
    inject,
    rank_norm,
)
from cea_kit.models.backbone import BlockWeights, Restorer, restore, transformer_block_forward
from cea_kit.models.cost import flop_report, parameter_report
from cea_kit.models.hyper_adapter import (
    AdapterWeights,
    CondensedFeatures,
    condense,
    decode_factors,
    generate_dynamic,
    generate_gap_mlp,
    probe,
)
from cea_kit.models.moe import moe_baseline_forward
from cea_kit.models.parameters import ParameterStore

__all__ = [
    "AdapterWeights",
    "BlockWeights",
    "CondensedFeatures",
    "FactorPair",
    "ParameterStore",
    "Restorer",
    "assemble_residual",
    "assemble_residual_matrix",
    "assemble_residual_tokenwise",
    "assemble_residual_topk",
    "condense",
    "decode_factors",
    "flop_report",
    "generate_dynamic",
    "generate_gap_mlp",
    "inject",
    "moe_baseline_forward",
    "parameter_report",
    "probe",
    "rank_norm",
    "restore",
    "transformer_block_forward",
]
