"""Token-wise residual assembly from rank-wise components.

For tokens ``X`` (N x d_in), routing bases ``A`` (d_in x r, one basis per
column) and residual directions ``B`` (r x d_out, one direction per row), the
dense signed rule gives every token

    dY_n = alpha * sum_k <X_n, a_k> b_k

which for the whole sequence is ``alpha * (X A) B``: linear attention without
softmax with queries X, keys A^T and values B, evaluated as two low-rank
products so no d_in x d_out matrix is formed.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from cea_kit.autograd import functional as F
from cea_kit.autograd.tensor import Tensor
from cea_kit.core.errors import ConfigError, DimensionError
from cea_kit.schemas.cea import CeaConfig, RoutingRule, Target


@dataclass(frozen=True)
class FactorPair:
    """Routing bases ``A`` and residual directions ``B`` for one target."""

    A: Tensor
    B: Tensor
    target: Target
    normalized: bool = False

    def __post_init__(self) -> None:
        if self.A.ndim != 2 or self.B.ndim != 2:
            raise DimensionError(f"factors must be matrices, got A{self.A.shape} and B{self.B.shape}")
        if self.A.shape[1] != self.B.shape[0]:
            raise DimensionError(f"rank mismatch: A{self.A.shape} has {self.A.shape[1]} columns, B{self.B.shape} has {self.B.shape[0]} rows")
        if self.A.shape[1] < 1 or self.A.shape[0] < 1 or self.B.shape[1] < 1:
            raise DimensionError(f"empty factors A{self.A.shape}, B{self.B.shape}")

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    @property
    def d_in(self) -> int:
        return self.A.shape[0]

    @property
    def d_out(self) -> int:
        return self.B.shape[1]


def rank_norm(fp: FactorPair, epsilon: float) -> FactorPair:
    """Divide each column of A and each row of B by (its L2 norm + epsilon).

    Works on a single instance; nothing is shared across samples.
    """
    if fp.normalized:
        raise ConfigError(f"factors for {fp.target.value} are already normalized")
    if epsilon <= 0.0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    a = fp.A / (F.l2_norm(fp.A, axis=0) + epsilon)
    b = fp.B / (F.l2_norm(fp.B, axis=1) + epsilon)
    return replace(fp, A=a, B=b, normalized=True)


def prepare_factors(fp: FactorPair, cfg: CeaConfig) -> FactorPair:
    """RankNorm when the configuration asks for it, raw factors otherwise."""
    return rank_norm(fp, cfg.epsilon) if cfg.rank_norm else fp


def _check_shapes(X: Tensor, fp: FactorPair, cfg: CeaConfig) -> None:
    if X.ndim != 2:
        raise DimensionError(f"tokens must be N x d_in, got {X.shape}")
    if X.shape[1] != fp.d_in:
        raise DimensionError(f"token width {X.shape[1]} != routing basis width {fp.d_in}")
    if fp.rank != cfg.rank:
        raise DimensionError(f"factor rank {fp.rank} != configured rank {cfg.rank}")


def assemble_residual_tokenwise(X: Tensor, fp: FactorPair, cfg: CeaConfig) -> Tensor:
    """Brute-force oracle: explicit per-token, per-rank summation (not differentiable)."""
    _check_shapes(X, fp, cfg)
    x, a, b = X.data, fp.A.data, fp.B.data
    out = np.zeros((x.shape[0], fp.d_out))
    for n in range(x.shape[0]):
        for k in range(fp.rank):
            affinity = 0.0
            for i in range(fp.d_in):
                affinity += x[n, i] * a[i, k]
            out[n] += affinity * b[k]
    return Tensor(cfg.scale * out)


def assemble_residual_matrix(X: Tensor, fp: FactorPair, cfg: CeaConfig) -> Tensor:
    """``alpha * (X A) B`` as two low-rank products."""
    if cfg.routing_rule != RoutingRule.DENSE_SIGNED:
        raise ConfigError(f"matrix assembly needs dense signed routing, got {cfg.routing_rule.value}")
    _check_shapes(X, fp, cfg)
    affinities = F.matmul(X, fp.A)
    return F.matmul(affinities, fp.B) * cfg.scale


def topk_mask(probabilities: np.ndarray, k: int) -> np.ndarray:
    """0/1 mask keeping the ``k`` largest entries per row; ties go to the lower index."""
    order = np.argsort(-probabilities, axis=1, kind="stable")[:, :k]
    mask = np.zeros_like(probabilities)
    np.put_along_axis(mask, order, 1.0, axis=1)
    return mask


def topk_softmax(logits: Tensor, k: int) -> Tensor:
    """Softmax over all entries, keep the top ``k`` per row, renormalize to sum 1."""
    if not 1 <= k <= logits.shape[1]:
        raise ConfigError(f"top-k needs 1 <= k <= {logits.shape[1]}, got {k}")
    probabilities = F.softmax(logits, axis=1)
    kept = probabilities * topk_mask(probabilities.data, k)
    return kept / kept.sum(axis=1, keepdims=True)


def assemble_residual_topk(X: Tensor, fp: FactorPair, cfg: CeaConfig) -> Tensor:
    """Sparse softmax routing over the rank components (no alpha: weights sum to 1)."""
    if cfg.routing_rule != RoutingRule.TOPK_SOFTMAX:
        raise ConfigError(f"top-k assembly needs top-k softmax routing, got {cfg.routing_rule.value}")
    if cfg.top_k > fp.rank:
        raise ConfigError(f"top-k softmax routing needs k <= r, got k={cfg.top_k}, r={fp.rank}")
    _check_shapes(X, fp, cfg)
    weights = topk_softmax(F.matmul(X, fp.A), cfg.top_k)
    return F.matmul(weights, fp.B)


def assemble_residual(X: Tensor, fp: FactorPair, cfg: CeaConfig) -> Tensor:
    """Assemble with the configured routing rule."""
    if cfg.routing_rule == RoutingRule.TOPK_SOFTMAX:
        return assemble_residual_topk(X, fp, cfg)
    return assemble_residual_matrix(X, fp, cfg)


def inject(base_out: Tensor, delta: Tensor) -> Tensor:
    """Add the assembled residual to a base projection output."""
    if base_out.shape != delta.shape:
        raise DimensionError(f"cannot inject residual {delta.shape} into projection output {base_out.shape}")
    return base_out + delta


def low_rank_macs(tokens: int, d_in: int, d_out: int, rank: int) -> int:
    return tokens * d_in * rank + tokens * rank * d_out


def dense_macs(tokens: int, d_in: int, d_out: int) -> int:
    return tokens * d_in * d_out
