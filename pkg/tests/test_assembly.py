"""Tests for residual assembly, RankNorm, injection and the sparse MoE baseline."""
import math

import numpy as np
import pytest

from cea_kit.autograd import Tensor, count_macs
from cea_kit.core.errors import ConfigError, DimensionError
from cea_kit.models.assembly import (
    FactorPair,
    assemble_residual,
    assemble_residual_matrix,
    assemble_residual_tokenwise,
    assemble_residual_topk,
    inject,
    low_rank_macs,
    rank_norm,
    topk_mask,
)
from cea_kit.models.moe import FixedRouter, TopKRouter, TwoLayerExpert, moe_baseline_forward
from cea_kit.schemas.cea import CeaConfig, RoutingRule, Target


def pair(a, b, target=Target.Q, normalized=True):
    return FactorPair(A=Tensor(a), B=Tensor(b), target=target, normalized=normalized)


def random_pair(rng, d_in, d_out, r):
    return pair(rng.normal(size=(d_in, r)), rng.normal(size=(r, d_out)), normalized=False)


# ----------------------------------------------------------------------------
# FactorPair and RankNorm
# ----------------------------------------------------------------------------


def test_factor_pair_rank_mismatch():
    """A columns must match B rows."""
    with pytest.raises(DimensionError):
        pair(np.ones((3, 2)), np.ones((3, 4)))


def test_rank_norm_three_four_five():
    """Column [3, 4] becomes [0.6, 0.8]."""
    fp = rank_norm(pair([[3.0], [4.0]], [[1.0, 0.0]], normalized=False), 1e-12)
    assert np.allclose(fp.A.data[:, 0], [0.6, 0.8])
    assert fp.normalized


def test_rank_norm_zero_column_stays_zero():
    """A zero column stays zero and finite."""
    fp = rank_norm(pair(np.zeros((3, 2)), np.ones((2, 2)), normalized=False), 1e-6)
    assert np.array_equal(fp.A.data, np.zeros((3, 2)))


def test_rank_norm_unit_norms(rng):
    """Normalized columns of A and rows of B have unit norm."""
    fp = rank_norm(random_pair(rng, 12, 7, 5), 1e-6)
    assert np.allclose(np.linalg.norm(fp.A.data, axis=0), 1.0, atol=1e-6)
    assert np.allclose(np.linalg.norm(fp.B.data, axis=1), 1.0, atol=1e-6)


def test_rank_norm_rejects_normalized_input(rng):
    """Normalizing twice is a configuration error."""
    fp = rank_norm(random_pair(rng, 4, 4, 2), 1e-6)
    with pytest.raises(ConfigError):
        rank_norm(fp, 1e-6)


@pytest.mark.parametrize("seed", range(10))
def test_rank_norm_removes_scale_ambiguity(seed):
    """(A diag(c), diag(1/c) B) and (A diag(c), diag(c) B) assemble like (A, B)."""
    rng = np.random.default_rng(seed)
    cfg = CeaConfig(rank=4, epsilon=1e-12)
    fp = random_pair(rng, 8, 6, 4)
    X = Tensor(rng.normal(size=(10, 8)))
    c = rng.uniform(0.1, 10.0, size=4) * rng.choice([-1.0, 1.0], size=4)
    reference = assemble_residual_matrix(X, rank_norm(fp, cfg.epsilon), cfg).data
    for b_scale in (1.0 / c, c):
        scaled = pair(fp.A.data * c, fp.B.data * b_scale[:, None], normalized=False)
        out = assemble_residual_matrix(X, rank_norm(scaled, cfg.epsilon), cfg).data
        assert np.max(np.abs(out - reference)) < 1e-9


def test_per_rank_scaling_changes_raw_assembly(rng):
    """Without RankNorm, scaling both factors by c changes the residual."""
    cfg = CeaConfig(rank=4, rank_norm=False)
    fp = random_pair(rng, 8, 6, 4)
    X = Tensor(rng.normal(size=(10, 8)))
    c = np.array([2.0, 3.0, -1.5, 0.5])
    scaled = pair(fp.A.data * c, fp.B.data * c[:, None], normalized=False)
    diff = assemble_residual_matrix(X, scaled, cfg).data - assemble_residual_matrix(X, fp, cfg).data
    assert np.max(np.abs(diff)) > 1e-3


# ----------------------------------------------------------------------------
# Dense signed assembly
# ----------------------------------------------------------------------------


def test_tokenwise_hand_example():
    """X_n=[1,2], a=[1,0], b=[0,3], alpha=1 gives [0,3]."""
    cfg = CeaConfig(rank=1, alpha=1.0)
    fp = pair([[1.0], [0.0]], [[0.0, 3.0]])
    X = Tensor([[1.0, 2.0]])
    assert np.array_equal(assemble_residual_tokenwise(X, fp, cfg).data, [[0.0, 3.0]])
    assert np.array_equal(assemble_residual_matrix(X, fp, cfg).data, [[0.0, 3.0]])


def test_zero_tokens_and_orthogonal_bases(rng):
    """Zero tokens or bases orthogonal to every token give a zero residual."""
    cfg = CeaConfig(rank=2)
    fp = pair(rng.normal(size=(4, 2)), rng.normal(size=(2, 3)))
    assert np.array_equal(assemble_residual_tokenwise(Tensor(np.zeros((5, 4))), fp, cfg).data, np.zeros((5, 3)))
    X = np.zeros((5, 4))
    X[:, :2] = rng.normal(size=(5, 2))
    orthogonal = pair(np.vstack([np.zeros((2, 2)), rng.normal(size=(2, 2))]), rng.normal(size=(2, 3)))
    assert np.array_equal(assemble_residual_matrix(Tensor(X), orthogonal, cfg).data, np.zeros((5, 3)))


def test_identity_factors_reproduce_tokens(rng):
    """r = d with A = B = I and alpha = 1 gives X back."""
    cfg = CeaConfig(rank=4, alpha=1.0)
    X = rng.normal(size=(6, 4))
    out = assemble_residual_matrix(Tensor(X), pair(np.eye(4), np.eye(4)), cfg)
    assert np.allclose(out.data, X)


@pytest.mark.parametrize("seed", range(50))
def test_matrix_matches_tokenwise(seed):
    """Two low-rank products agree with explicit summation."""
    rng = np.random.default_rng(seed)
    n, d_in, d_out = (int(v) for v in rng.integers(1, [65, 33, 33]))
    r = int(rng.integers(1, 17))
    cfg = CeaConfig(rank=r)
    fp = rank_norm(random_pair(rng, d_in, d_out, r), cfg.epsilon)
    X = Tensor(rng.normal(size=(n, d_in)))
    diff = assemble_residual_matrix(X, fp, cfg).data - assemble_residual_tokenwise(X, fp, cfg).data
    assert np.max(np.abs(diff)) < 1e-10


def test_dense_assembly_is_linear(rng):
    """Dense signed routing is additive in X."""
    cfg = CeaConfig(rank=4)
    fp = rank_norm(random_pair(rng, 8, 8, 4), cfg.epsilon)
    x1, x2 = rng.normal(size=(6, 8)), rng.normal(size=(6, 8))
    joint = assemble_residual_matrix(Tensor(x1 + x2), fp, cfg).data
    split = assemble_residual_matrix(Tensor(x1), fp, cfg).data + assemble_residual_matrix(Tensor(x2), fp, cfg).data
    assert np.max(np.abs(joint - split)) < 1e-10


def test_default_alpha_is_inverse_rank():
    """alpha defaults to 1/r."""
    assert CeaConfig(rank=8).scale == 0.125
    assert CeaConfig(rank=8, alpha=0.5).scale == 0.5


def test_matrix_assembly_mac_count(rng):
    """Counted MACs equal N d_in r + N r d_out."""
    cfg = CeaConfig(rank=8)
    fp = random_pair(rng, 64, 64, 8)
    with count_macs() as counter:
        assemble_residual_matrix(Tensor(rng.normal(size=(256, 64))), fp, cfg)
    assert counter.total == low_rank_macs(256, 64, 64, 8) == 262_144


def test_shape_errors(rng):
    """Token width and rank must match the factors and config."""
    fp = random_pair(rng, 4, 3, 2)
    with pytest.raises(DimensionError):
        assemble_residual_matrix(Tensor(np.ones((5, 3))), fp, CeaConfig(rank=2))
    with pytest.raises(DimensionError):
        assemble_residual_matrix(Tensor(np.ones((5, 4))), fp, CeaConfig(rank=3))


def test_matrix_assembly_requires_dense_routing(rng):
    """The matrix form is the dense signed rule only."""
    cfg = CeaConfig(rank=2, routing_rule=RoutingRule.TOPK_SOFTMAX, top_k=1)
    with pytest.raises(ConfigError):
        assemble_residual_matrix(Tensor(np.ones((2, 4))), random_pair(rng, 4, 3, 2), cfg)


# ----------------------------------------------------------------------------
# Top-k softmax routing
# ----------------------------------------------------------------------------


def test_topk_closed_form():
    """Affinities [ln2, 0, -1000] with k=2 weight b1, b2 by 2/3 and 1/3."""
    cfg = CeaConfig(rank=3, routing_rule=RoutingRule.TOPK_SOFTMAX, top_k=2)
    b = np.array([[1.0, 0.0], [0.0, 1.0], [5.0, 5.0]])
    fp = pair(np.eye(3), b)
    X = Tensor([[math.log(2.0), 0.0, -1000.0]])
    out = assemble_residual_topk(X, fp, cfg).data
    assert np.allclose(out, [[2.0 / 3.0, 1.0 / 3.0]])


def test_topk_with_k_equal_r_is_full_softmax(rng):
    """No truncation when k = r."""
    cfg = CeaConfig(rank=4, routing_rule=RoutingRule.TOPK_SOFTMAX, top_k=4)
    fp = pair(rng.normal(size=(5, 4)), rng.normal(size=(4, 3)))
    X = rng.normal(size=(6, 5))
    logits = X @ fp.A.data
    weights = np.exp(logits - logits.max(axis=1, keepdims=True))
    weights /= weights.sum(axis=1, keepdims=True)
    assert np.allclose(assemble_residual_topk(Tensor(X), fp, cfg).data, weights @ fp.B.data)


def test_topk_saturation():
    """One dominant affinity selects its residual direction."""
    cfg = CeaConfig(rank=3, routing_rule=RoutingRule.TOPK_SOFTMAX, top_k=2)
    b = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    out = assemble_residual_topk(Tensor([[0.0, 1000.0, 0.0]]), pair(np.eye(3), b), cfg).data
    assert np.allclose(out, [[3.0, 4.0]])


def test_topk_ties_prefer_lower_index():
    """Equal probabilities keep the lowest rank indices."""
    mask = topk_mask(np.array([[0.25, 0.25, 0.25, 0.25]]), 2)
    assert np.array_equal(mask, [[1.0, 1.0, 0.0, 0.0]])


def test_topk_breaks_linearity(rng):
    """Top-k routing is not additive in X."""
    cfg = CeaConfig(rank=4, routing_rule=RoutingRule.TOPK_SOFTMAX, top_k=2)
    fp = rank_norm(random_pair(rng, 8, 8, 4), cfg.epsilon)
    x1, x2 = rng.normal(size=(6, 8)), rng.normal(size=(6, 8))
    joint = assemble_residual(Tensor(x1 + x2), fp, cfg).data
    split = assemble_residual(Tensor(x1), fp, cfg).data + assemble_residual(Tensor(x2), fp, cfg).data
    assert np.max(np.abs(joint - split)) > 1e-6


def test_topk_k_above_rank_rejected():
    """k > r is a configuration error."""
    with pytest.raises(ValueError):
        CeaConfig(rank=2, routing_rule=RoutingRule.TOPK_SOFTMAX, top_k=3)


# ----------------------------------------------------------------------------
# Injection
# ----------------------------------------------------------------------------


def test_inject(rng):
    """Elementwise sum with shape check."""
    base, delta = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    assert np.array_equal(inject(Tensor(base), Tensor(np.zeros((3, 2)))).data, base)
    assert np.array_equal(inject(Tensor(np.zeros((3, 2))), Tensor(delta)).data, delta)
    assert np.array_equal(inject(Tensor(base), Tensor(delta)).data, base + delta)
    with pytest.raises(DimensionError):
        inject(Tensor(base), Tensor(np.zeros((2, 3))))


# ----------------------------------------------------------------------------
# Sparse MoE baseline
# ----------------------------------------------------------------------------


def test_moe_zero_gates(rng):
    """All gates zero leaves the base projection."""
    X, W = rng.normal(size=(4, 3)), rng.normal(size=(3, 3))
    experts = [TwoLayerExpert.linear(Tensor(rng.normal(size=(3, 3)))) for _ in range(2)]
    out = moe_baseline_forward(Tensor(X), Tensor(W), experts, FixedRouter(Tensor([[0.0, 0.0]])))
    assert np.array_equal(out.data, X @ W)


def test_moe_identity_expert(rng):
    """One identity expert with gate 1 adds X."""
    X, W = rng.normal(size=(4, 3)), rng.normal(size=(3, 3))
    out = moe_baseline_forward(Tensor(X), Tensor(W), [TwoLayerExpert.linear(Tensor(np.eye(3)))], FixedRouter(Tensor([[1.0]])))
    assert np.allclose(out.data, X @ W + X)


def test_moe_hand_gates(rng):
    """Gates [0.5, 0.5] over linear experts M1, M2."""
    X, W = rng.normal(size=(4, 3)), rng.normal(size=(3, 2))
    m1, m2 = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    experts = [TwoLayerExpert.linear(Tensor(m1)), TwoLayerExpert.linear(Tensor(m2))]
    out = moe_baseline_forward(Tensor(X), Tensor(W), experts, FixedRouter(Tensor([[0.5, 0.5]])))
    assert np.allclose(out.data, X @ W + 0.5 * X @ m1 + 0.5 * X @ m2)


def test_moe_topk_router_selects_k_experts(rng):
    """A top-1 router gives each token exactly one non-zero gate."""
    router = TopKRouter(Tensor(rng.normal(size=(3, 4))), k=1)
    gates = router(Tensor(rng.normal(size=(5, 3)))).data
    assert np.array_equal((gates > 0).sum(axis=1), np.ones(5))
    assert np.allclose(gates.sum(axis=1), 1.0)
