"""Tests for the cross-attention hyper-adapter and the baseline factor sources."""
import numpy as np
import pytest

from cea_kit.autograd import Tensor, grad
from cea_kit.autograd import functional as F
from cea_kit.core.errors import ConfigError, DimensionError
from cea_kit.metrics.losses import loss_total
from cea_kit.models.backbone import BlockWeights, transformer_block_forward
from cea_kit.models.hyper_adapter import (
    AdapterWeights,
    GapMlpWeights,
    StaticFactorWeights,
    condense,
    decode_factors,
    generate_dynamic,
    generate_dynamic_batch,
    generate_factors,
    generate_gap_mlp,
    generate_static,
    probe,
    probe_pair,
)
from cea_kit.models.parameters import ParameterStore
from cea_kit.schemas.cea import CeaConfig, FactorGenerator, FactorSource, Target

C = 8
DIMS = {Target.Q: (C, C), Target.K: (C, C)}


def adapter(cfg=None, seed=0):
    cfg = cfg or CeaConfig(rank=4, adapter_heads=2)
    return AdapterWeights.create(ParameterStore(seed), "block.cea", C, cfg, DIMS), cfg


def features(rng, h=8, w=8):
    return Tensor(rng.normal(size=(h, w, C)))


# ----------------------------------------------------------------------------
# Condensation
# ----------------------------------------------------------------------------


@pytest.mark.parametrize("size", [8, 7])
def test_condense_token_count(rng, size):
    """8x8 and 7x7 maps both condense to 16 tokens at stride 2."""
    weights, _ = adapter()
    condensed = condense(features(rng, size, size), weights, 2)
    assert condensed.tokens.shape == (16, C)
    assert (condensed.height, condensed.width) == (4, 4)


def test_condense_identity_kernels(rng):
    """Centre-tap depthwise and identity pointwise at stride 1 return the input tokens."""
    weights, _ = adapter()
    kernel = np.zeros((3, 3, C))
    kernel[1, 1] = 1.0
    weights.depthwise.assign(kernel)
    weights.pointwise.assign(np.eye(C))
    x = features(rng, 5, 6)
    condensed = condense(x, weights, 1)
    assert np.allclose(condensed.tokens.data, x.data.reshape(30, C))


def test_condense_rejects_bad_input(rng):
    """Channel mismatch and non-positive stride are rejected."""
    weights, _ = adapter()
    with pytest.raises(DimensionError):
        condense(Tensor(rng.normal(size=(8, 8, C + 1))), weights, 2)
    with pytest.raises(ConfigError):
        condense(features(rng), weights, 0)


# ----------------------------------------------------------------------------
# Probing
# ----------------------------------------------------------------------------


def test_probe_single_token(rng):
    """With one condensed token every query attends to it with weight 1."""
    weights, _ = adapter()
    condensed = condense(features(rng, 2, 2), weights, 2)
    assert condensed.tokens.shape[0] == 1
    probed, attention = probe(weights.queries_a, condensed, weights, return_attention=True)
    tokens = condensed.tokens.data
    expected = weights.queries_a.data + np.tile(tokens @ weights.wv.data @ weights.wo.data, (weights.rank, 1))
    assert np.allclose(probed.data, expected)
    assert all(np.allclose(a.data, 1.0) for a in attention)


def test_probe_zero_values_returns_queries(rng):
    """W_v = 0 makes T equal to R."""
    weights, _ = adapter()
    weights.wv.assign(np.zeros((C, C)))
    condensed = condense(features(rng), weights, 2)
    assert np.array_equal(probe(weights.queries_b, condensed, weights).data, weights.queries_b.data)


def test_probe_attention_rows_sum_to_one(rng):
    """Every head's attention rows are a distribution."""
    weights, _ = adapter()
    _, attention = probe(weights.queries_a, condense(features(rng), weights, 2), weights, return_attention=True)
    assert len(attention) == weights.n_heads
    for a in attention:
        assert np.max(np.abs(a.data.sum(axis=1) - 1.0)) < 1e-12
        assert np.all(a.data >= 0.0)


def test_probe_pair_matches_separate_probes(rng):
    """Probing both query sets together equals probing them separately."""
    weights, _ = adapter()
    condensed = condense(features(rng), weights, 2)
    t_a, t_b = probe_pair(condensed, weights)
    assert np.allclose(t_a.data, probe(weights.queries_a, condensed, weights).data)
    assert np.allclose(t_b.data, probe(weights.queries_b, condensed, weights).data)


# ----------------------------------------------------------------------------
# Decoding and generation
# ----------------------------------------------------------------------------


def test_decode_factor_shapes(rng):
    """A is d_in x r and B is r x d_out."""
    weights, _ = adapter()
    t_a, t_b = probe_pair(condense(features(rng), weights, 2), weights)
    fp = decode_factors(t_a, t_b, weights, Target.Q)
    assert fp.A.shape == (C, 4)
    assert fp.B.shape == (4, C)
    assert not fp.normalized


def test_decode_identity_head(rng):
    """Identity heads give A = T_A^T and B = T_B."""
    weights, _ = adapter()
    weights.heads_a[Target.Q].assign(np.eye(C))
    weights.heads_b[Target.Q].assign(np.eye(C))
    t_a, t_b = Tensor(rng.normal(size=(4, C))), Tensor(rng.normal(size=(4, C)))
    fp = decode_factors(t_a, t_b, weights, Target.Q)
    assert np.allclose(fp.A.data, t_a.data.T)
    assert np.allclose(fp.B.data, t_b.data)


def test_decode_missing_head(rng):
    """Targets without a decoding head are a configuration error."""
    weights, _ = adapter()
    t = Tensor(rng.normal(size=(4, C)))
    with pytest.raises(ConfigError):
        decode_factors(t, t, weights, Target.V)


def test_generate_dynamic_is_deterministic(rng):
    """Same input and weights give bitwise-identical factors."""
    weights, cfg = adapter()
    x = features(rng)
    first, second = generate_dynamic(x, weights, cfg), generate_dynamic(x, weights, cfg)
    assert set(first) == {Target.Q, Target.K}
    for target in first:
        assert np.array_equal(first[target].A.data, second[target].A.data)
        assert np.array_equal(first[target].B.data, second[target].B.data)
        assert first[target].normalized


def test_factors_depend_on_the_instance(rng):
    """Different inputs give different factors."""
    weights, cfg = adapter()
    a = generate_dynamic(features(rng), weights, cfg)[Target.Q]
    b = generate_dynamic(features(rng), weights, cfg)[Target.Q]
    assert np.max(np.abs(a.A.data - b.A.data)) > 1e-6


def test_batch_generation_is_per_instance(rng):
    """A sample's factors do not depend on the rest of the batch."""
    weights, cfg = adapter()
    x1, x2 = features(rng), features(rng)
    alone = generate_dynamic(x1, weights, cfg)
    batched = generate_dynamic_batch([x1, x2], weights, cfg)
    for target in alone:
        assert np.array_equal(alone[target].A.data, batched[0][target].A.data)
        assert np.array_equal(alone[target].B.data, batched[0][target].B.data)


def test_raw_factors_without_rank_norm(rng):
    """rank_norm=False leaves the decoded factors untouched."""
    weights, cfg = adapter(CeaConfig(rank=4, adapter_heads=2, rank_norm=False))
    factors = generate_dynamic(features(rng), weights, cfg)
    assert not factors[Target.Q].normalized


def test_generate_dynamic_rejects_static_source(rng):
    """The dynamic path needs the dynamic factor source."""
    weights, _ = adapter()
    with pytest.raises(ConfigError):
        generate_dynamic(features(rng), weights, CeaConfig(rank=4, adapter_heads=2, factor_source=FactorSource.STATIC))


def test_adapter_heads_must_divide_channels():
    """Three heads do not split eight channels."""
    with pytest.raises(ConfigError):
        adapter(CeaConfig(rank=4, adapter_heads=3))


@pytest.mark.parametrize("seed", range(20))
def test_gradients_reach_every_adapter_parameter(seed):
    """One backward pass of the training loss through a CEA block reaches every adapter weight."""
    rng = np.random.default_rng(seed)
    cfg = CeaConfig(rank=4, adapter_heads=2, injection_targets="Q+K+V")
    store = ParameterStore(seed)
    block = BlockWeights.create(store, "block", C, heads=2, ffn_ratio=2)
    weights = AdapterWeights.create(store, "block.cea", C, cfg, {t: block.target_dims()[t] for t in cfg.injection_targets})
    x = features(rng)
    context = generate_dynamic(x, weights, cfg)
    out = transformer_block_forward(x.reshape(64, C), block, context, cfg).reshape(8, 8, C)
    loss = loss_total(out, Tensor(rng.uniform(size=(8, 8, C))))
    grads = grad(loss, weights.tensors())
    for tensor, g in zip(weights.tensors(), grads):
        assert np.any(g != 0.0), tensor.name



# ----------------------------------------------------------------------------
# Baselines
# ----------------------------------------------------------------------------


def test_gap_mlp_is_permutation_invariant(rng):
    """Shuffling tokens does not change GAP+MLP factors."""
    cfg = CeaConfig(rank=4, generator=FactorGenerator.GAP_MLP)
    weights = GapMlpWeights.create(ParameterStore(0), "block.cea", C, cfg, DIMS)
    tokens = rng.normal(size=(20, C))
    shuffled = tokens[rng.permutation(20)]
    a = generate_gap_mlp(Tensor(tokens), weights, cfg)
    b = generate_gap_mlp(Tensor(shuffled), weights, cfg)
    for target in a:
        assert np.max(np.abs(a[target].A.data - b[target].A.data)) < 1e-12
        assert np.max(np.abs(a[target].B.data - b[target].B.data)) < 1e-12


def test_gap_mlp_output_width():
    """The MLP emits r (d_in + d_out) values per target."""
    assert GapMlpWeights.output_width(DIMS, 4) == 2 * 4 * (C + C)


def test_static_factors_ignore_the_input(rng):
    """Static factors are the same for every image."""
    cfg = CeaConfig(rank=4, factor_source=FactorSource.STATIC)
    weights = StaticFactorWeights.create(ParameterStore(0), "block.cea", cfg, DIMS)
    a = generate_factors(features(rng), weights, cfg)
    b = generate_factors(features(rng), weights, cfg)
    assert np.array_equal(a[Target.K].A.data, b[Target.K].A.data)
    assert np.array_equal(generate_static(weights, cfg)[Target.Q].B.data, a[Target.Q].B.data)


def test_generate_factors_dispatches_on_weights(rng):
    """The cross-attention weights route to the dynamic generator."""
    weights, cfg = adapter()
    x = features(rng)
    direct = generate_dynamic(x, weights, cfg)
    dispatched = generate_factors(x, weights, cfg)
    assert np.array_equal(direct[Target.Q].A.data, dispatched[Target.Q].A.data)


def test_condensed_token_count_shrinks_with_stride(rng):
    """Larger condensation strides give fewer tokens."""
    weights, _ = adapter()
    x = features(rng, 16, 16)
    sizes = [condense(x, weights, s).tokens.shape[0] for s in (1, 2, 4)]
    assert sizes == [256, 64, 16]
    assert F.conv_output_size(16, 3, 4, 1) == 4
