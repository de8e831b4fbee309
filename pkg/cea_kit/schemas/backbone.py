"""Backbone geometry schemas."""
from pydantic import BaseModel, ConfigDict, Field, model_validator

from cea_kit.core.constants import FFN_RATIO
from cea_kit.schemas.cea import CeaConfig, FactorGenerator, FactorSource

# Below this input size the deepest resolution level is dropped.
MIN_SIZE_FOR_FULL_DEPTH = 32
MIN_DEPTH = 2


class BackboneConfig(BaseModel):
    """Asymmetric U-shaped Transformer restorer.

    Level ``i`` runs at ``H/2**i x W/2**i`` with ``embed_dim * 2**i`` channels.
    The encoder has one stage per entry of ``encoder_blocks`` (levels 0..L-1),
    the latent stage sits at level L, and ``decoder_blocks`` lists decoder
    stages from low to high resolution (levels L-1..0).
    """

    embed_dim: int = Field(default=16, ge=1, description="Channels at full resolution (C)")
    encoder_blocks: tuple[int, ...] = Field(default=(1, 1, 1), description="Blocks per encoder stage")
    latent_blocks: int = Field(default=1, ge=1, description="Blocks in the latent stage")
    decoder_blocks: tuple[int, ...] = Field(default=(2, 2, 2), description="Blocks per decoder stage, low to high")
    refinement_blocks: int = Field(default=1, ge=0, description="Blocks after the last decoder stage")
    heads: tuple[int, ...] = Field(default=(1, 2, 2, 4), description="Self-attention heads per level (0..L)")
    ffn_ratio: int = Field(default=FFN_RATIO, ge=1, description="FFN expansion ratio")
    cea_every: int = Field(
        default=2, ge=1, description="CEA in every n-th decoder block, starting at each stage's first block"
    )
    cea: CeaConfig = Field(default_factory=CeaConfig, description="CEA configuration")

    model_config = ConfigDict(frozen=True, extra="forbid")

    @model_validator(mode="after")
    def validate_geometry(self) -> "BackboneConfig":
        depth = len(self.encoder_blocks)
        if depth < 1:
            raise ValueError("encoder_blocks must list at least one stage")
        if len(self.decoder_blocks) != depth:
            raise ValueError(f"decoder_blocks needs {depth} stages to mirror the encoder, got {len(self.decoder_blocks)}")
        if len(self.heads) != depth + 1:
            raise ValueError(f"heads needs {depth + 1} entries (one per level), got {len(self.heads)}")
        if any(b < 1 for b in self.encoder_blocks + self.decoder_blocks):
            raise ValueError("every encoder/decoder stage needs at least one block")
        for level, heads in enumerate(self.heads):
            if heads < 1 or self.channels(level) % heads:
                raise ValueError(f"{heads} heads do not divide {self.channels(level)} channels at level {level}")
        uses_adapter = (
            self.cea.enabled
            and self.cea.factor_source == FactorSource.DYNAMIC
            and self.cea.generator == FactorGenerator.CROSS_ATTENTION
        )
        if uses_adapter:
            for level in range(depth):
                if self.channels(level) % self.cea.adapter_heads:
                    raise ValueError(
                        f"{self.cea.adapter_heads} adapter heads do not divide {self.channels(level)} channels"
                    )
        return self

    @property
    def depth(self) -> int:
        """Number of downsamplings."""
        return len(self.encoder_blocks)

    def channels(self, level: int) -> int:
        return self.embed_dim * 2**level

    def decoder_level(self, stage: int) -> int:
        """Resolution level of decoder stage ``stage`` (0 = lowest resolution)."""
        return self.depth - 1 - stage

    def is_cea_block(self, block_index: int) -> bool:
        return self.cea.enabled and block_index % self.cea_every == 0

    def cea_block_counts(self) -> list[int]:
        """CEA-equipped blocks per decoder stage, low to high resolution."""
        return [sum(self.is_cea_block(j) for j in range(n)) for n in self.decoder_blocks]

    def for_resolution(self, height: int, width: int) -> "BackboneConfig":
        """Geometry usable at ``height x width``.

        Drops the deepest level while the input is smaller than
        MIN_SIZE_FOR_FULL_DEPTH or does not divide by ``2**depth``, keeping at
        least MIN_DEPTH levels (inputs divisible by 4 always fit).
        """
        config = self
        while config.depth > MIN_DEPTH and (
            min(height, width) < MIN_SIZE_FOR_FULL_DEPTH or height % 2**config.depth or width % 2**config.depth
        ):
            config = config.model_copy(
                update={
                    "encoder_blocks": config.encoder_blocks[:-1],
                    "decoder_blocks": config.decoder_blocks[1:],
                    "heads": config.heads[:-1],
                }
            )
        return config

    @classmethod
    def reference_geometry(cls, cea: CeaConfig | None = None) -> "BackboneConfig":
        """Full-size lightweight geometry (C=32, 4-6-6 encoder, 8 latent blocks)."""
        return cls(
            embed_dim=32,
            encoder_blocks=(4, 6, 6),
            latent_blocks=8,
            decoder_blocks=(2, 4, 4),
            refinement_blocks=4,
            heads=(1, 2, 4, 8),
            cea=cea or CeaConfig(),
        )
