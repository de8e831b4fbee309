"""U-shaped Transformer restorer with CEA injection in decoder blocks.

Feature maps are channels-last ``H x W x C``; Transformer blocks see them as
``H*W x C`` token matrices. Level ``i`` runs at ``H/2**i`` with ``C*2**i``
channels. Parameter names are hierarchical (``decoder.1.block0.attn.wq``) and
stable across CEA configurations, so variants built from the same seed share
their backbone initialization.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

from cea_kit.autograd import functional as F
from cea_kit.autograd.tensor import Tensor, as_tensor
from cea_kit.core.constants import LAYER_NORM_EPSILON
from cea_kit.core.errors import ConfigError, DimensionError
from cea_kit.models.assembly import FactorPair, assemble_residual, inject
from cea_kit.models.attention import multi_head_attention
from cea_kit.models.hyper_adapter import GeneratorWeights, TargetDims, create_generator, generate_factors
from cea_kit.models.parameters import ParameterStore
from cea_kit.schemas.backbone import BackboneConfig
from cea_kit.schemas.cea import CeaConfig, Target

logger = logging.getLogger(__name__)

CeaContext = dict[Target, FactorPair]


@dataclass(frozen=True)
class BlockWeights:
    """Pre-norm Transformer block parameters (no biases)."""

    norm1: Tensor  # C
    wq: Tensor  # C x C
    wk: Tensor
    wv: Tensor
    wo: Tensor
    norm2: Tensor  # C
    w1: Tensor  # C x ratio*C
    w2: Tensor  # ratio*C x C
    heads: int

    @property
    def channels(self) -> int:
        return self.wq.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    def target_dims(self) -> TargetDims:
        c = self.channels
        return {Target.Q: (c, c), Target.K: (c, c), Target.V: (c, c), Target.FFN_IN: (c, self.hidden)}

    @classmethod
    def create(cls, store: ParameterStore, prefix: str, channels: int, heads: int, ffn_ratio: int) -> "BlockWeights":
        c, hidden = channels, ffn_ratio * channels
        return cls(
            norm1=store.ones(f"{prefix}.norm1", (c,)),
            wq=store.uniform(f"{prefix}.attn.wq", (c, c), fan_in=c),
            wk=store.uniform(f"{prefix}.attn.wk", (c, c), fan_in=c),
            wv=store.uniform(f"{prefix}.attn.wv", (c, c), fan_in=c),
            wo=store.uniform(f"{prefix}.attn.wo", (c, c), fan_in=c),
            norm2=store.ones(f"{prefix}.norm2", (c,)),
            w1=store.uniform(f"{prefix}.ffn.w1", (c, hidden), fan_in=c),
            w2=store.uniform(f"{prefix}.ffn.w2", (hidden, c), fan_in=hidden),
            heads=heads,
        )


def _project(x: Tensor, weight: Tensor, target: Target, cea_context: CeaContext | None, cea: CeaConfig | None) -> Tensor:
    base = F.matmul(x, weight)
    if cea_context is None or target not in cea_context:
        return base
    return inject(base, assemble_residual(x, cea_context[target], cea))


def transformer_block_forward(
    X: Tensor,
    weights: BlockWeights,
    cea_context: CeaContext | None = None,
    cea: CeaConfig | None = None,
) -> Tensor:
    """Pre-norm spatial self-attention and GELU FFN, each wrapped in a residual.

    With ``cea_context`` the assembled residual of every configured target is
    added to the matching projection output (Q/K/V, or the first FFN layer
    for ``FFN_in``).
    """
    if X.ndim != 2 or X.shape[1] != weights.channels:
        raise DimensionError(f"block expects N x {weights.channels} tokens, got {X.shape}")
    if cea_context is not None:
        if cea is None:
            raise ConfigError("a CEA context needs the CEA configuration it was generated for")
        if set(cea_context) != set(cea.injection_targets):
            raise ConfigError(
                f"factor targets {sorted(t.value for t in cea_context)} do not match injection targets "
                f"{[t.value for t in cea.injection_targets]}"
            )

    h = F.layer_norm(X, weights.norm1, eps=LAYER_NORM_EPSILON)
    q = _project(h, weights.wq, Target.Q, cea_context, cea)
    k = _project(h, weights.wk, Target.K, cea_context, cea)
    v = _project(h, weights.wv, Target.V, cea_context, cea)
    attended, _ = multi_head_attention(q, k, v, weights.heads)
    X = X + F.matmul(attended, weights.wo)

    h = F.layer_norm(X, weights.norm2, eps=LAYER_NORM_EPSILON)
    hidden = F.gelu(_project(h, weights.w1, Target.FFN_IN, cea_context, cea))
    return X + F.matmul(hidden, weights.w2)


@dataclass(frozen=True)
class BlockSpec:
    """One block of the network with its optional factor generator."""

    name: str
    weights: BlockWeights
    generator: GeneratorWeights | None = None


class Restorer:
    """Blind all-in-one restorer ``y_hat = x + head(features(x))``.

    Usage:
        restorer = Restorer(config, seed=0)
        y_hat = restorer(image)                 # H x W x 3 Tensor
        restorer.state.save(path)               # flat named checkpoint
    """

    def __init__(self, config: BackboneConfig, state: ParameterStore | None = None, seed: int = 0):
        self.config = config
        self.state = state if state is not None else ParameterStore(seed)
        preloaded = set(self.state)
        self._build()
        if preloaded:
            missing = set(self.state) - preloaded
            unexpected = preloaded - self.state.requested
            if missing or unexpected:
                raise ConfigError(
                    f"parameters do not match the configuration: missing {sorted(missing)[:5]}, "
                    f"unexpected {sorted(unexpected)[:5]}"
                )
        logger.debug(
            f"Built restorer: depth={config.depth}, C={config.embed_dim}, CEA targets={config.cea.targets_label()}, "
            f"{self.state.count()} parameters"
        )

    # ------------------------------------------------------------------
    # Construction
    # ------------------------------------------------------------------
    def _blocks(self, prefix: str, count: int, level: int, cea_stage: bool = False) -> list[BlockSpec]:
        cfg = self.config
        channels = cfg.channels(level)
        specs = []
        for j in range(count):
            name = f"{prefix}.block{j}"
            weights = BlockWeights.create(self.state, name, channels, cfg.heads[level], cfg.ffn_ratio)
            generator = None
            if cea_stage and cfg.is_cea_block(j):
                dims = {t: weights.target_dims()[t] for t in cfg.cea.injection_targets}
                generator = create_generator(self.state, f"{name}.cea", channels, cfg.cea, dims)
            specs.append(BlockSpec(name=name, weights=weights, generator=generator))
        return specs

    def _build(self) -> None:
        cfg, store = self.config, self.state
        depth = cfg.depth
        c0 = cfg.channels(0)

        self.embed = store.uniform("embed.w", (3, c0), fan_in=3)
        self.encoder: list[list[BlockSpec]] = []
        self.down: list[Tensor] = []
        for level in range(depth):
            self.encoder.append(self._blocks(f"encoder.{level}", cfg.encoder_blocks[level], level))
            c_in, c_out = cfg.channels(level), cfg.channels(level + 1)
            self.down.append(store.uniform(f"down.{level}.w", (c_in, c_out), fan_in=c_in))

        self.latent = self._blocks("latent", cfg.latent_blocks, depth)

        self.up: list[Tensor] = []
        self.fuse: list[Tensor] = []
        self.decoder: list[list[BlockSpec]] = []
        for stage in range(depth):
            level = cfg.decoder_level(stage)
            c_low, c = cfg.channels(level + 1), cfg.channels(level)
            self.up.append(store.uniform(f"up.{stage}.w", (c_low, c), fan_in=c_low))
            self.fuse.append(store.uniform(f"fuse.{stage}.w", (2 * c, c), fan_in=2 * c))
            self.decoder.append(self._blocks(f"decoder.{stage}", cfg.decoder_blocks[stage], level, cea_stage=True))

        self.refinement = self._blocks("refine", cfg.refinement_blocks, 0)
        self.head = store.zeros("head.w", (c0, 3))

    # ------------------------------------------------------------------
    # Forward
    # ------------------------------------------------------------------
    def _run_stage(self, features: Tensor, blocks: list[BlockSpec]) -> Tensor:
        h, w, c = features.shape
        tokens = features.reshape(h * w, c)
        for block in blocks:
            context = None
            if block.generator is not None:
                context = generate_factors(tokens.reshape(h, w, c), block.generator, self.config.cea)
            tokens = transformer_block_forward(tokens, block.weights, context, self.config.cea)
        return tokens.reshape(h, w, c)

    def check_input(self, image: Tensor) -> None:
        if image.ndim != 3 or image.shape[2] != 3:
            raise DimensionError(f"restore expects an H x W x 3 image, got {image.shape}")
        factor = 2**self.config.depth
        if image.shape[0] % factor or image.shape[1] % factor:
            raise DimensionError(
                f"image size {image.shape[0]}x{image.shape[1]} is not divisible by {factor} "
                f"({self.config.depth} downsamplings)"
            )

    def __call__(self, image: Tensor) -> Tensor:
        return self.forward(image)

    def forward(self, image: Tensor) -> Tensor:
        image = as_tensor(image)
        self.check_input(image)
        cfg = self.config

        features = F.pointwise_conv2d(image, self.embed)
        skips: list[Tensor] = []
        for level in range(cfg.depth):
            features = self._run_stage(features, self.encoder[level])
            skips.append(features)
            features = F.pointwise_conv2d(features, self.down[level], stride=2)

        features = self._run_stage(features, self.latent)

        for stage in range(cfg.depth):
            level = cfg.decoder_level(stage)
            upsampled = F.pointwise_conv2d(F.upsample_nearest(features, 2), self.up[stage])
            features = F.pointwise_conv2d(F.concat([upsampled, skips[level]], axis=2), self.fuse[stage])
            features = self._run_stage(features, self.decoder[stage])

        features = self._run_stage(features, self.refinement)
        return image + F.pointwise_conv2d(features, self.head)

    # ------------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------------
    def cea_blocks(self) -> list[BlockSpec]:
        return [b for stage in self.decoder for b in stage if b.generator is not None]

    def cea_parameters(self) -> list[Tensor]:
        return [t for b in self.cea_blocks() for t in b.generator.tensors()]


def restore(image: Tensor, state: ParameterStore, config: BackboneConfig) -> Tensor:
    """Run the restorer described by ``config`` with the parameters in ``state``.

    The geometry is first fitted to the image size with
    ``BackboneConfig.for_resolution``. ``state`` must hold every parameter that
    geometry needs; a fresh store is initialized in place from its seed.
    """
    image = as_tensor(image)
    if image.ndim != 3:
        raise DimensionError(f"restore expects an H x W x 3 image, got {image.shape}")
    return Restorer(config.for_resolution(image.shape[0], image.shape[1]), state=state).forward(image)
