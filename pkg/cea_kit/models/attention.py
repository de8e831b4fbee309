"""Multi-head scaled dot-product attention without biases."""
from __future__ import annotations

import math

from cea_kit.autograd import functional as F
from cea_kit.autograd.tensor import Tensor
from cea_kit.core.errors import DimensionError


def multi_head_attention(q: Tensor, k: Tensor, v: Tensor, heads: int) -> tuple[Tensor, list[Tensor]]:
    """Attend ``q`` (Nq x d) over ``k``/``v`` (Nk x d) with ``heads`` heads of width d/heads.

    Returns the concatenated head outputs and the per-head attention weights
    (Nq x Nk, rows sum to one).
    """
    if q.shape[1] != k.shape[1] or k.shape != v.shape:
        raise DimensionError(f"attention operands disagree: q{q.shape}, k{k.shape}, v{v.shape}")
    width = q.shape[1]
    if heads < 1 or width % heads:
        raise DimensionError(f"{heads} heads do not divide width {width}")
    head_dim = width // heads
    scale = 1.0 / math.sqrt(head_dim)

    outputs: list[Tensor] = []
    weights: list[Tensor] = []
    for h in range(heads):
        cols = slice(h * head_dim, (h + 1) * head_dim)
        logits = F.matmul(q[:, cols], F.transpose(k[:, cols])) * scale
        attn = F.softmax(logits, axis=1)
        outputs.append(F.matmul(attn, v[:, cols]))
        weights.append(attn)
    out = outputs[0] if heads == 1 else F.concat(outputs, axis=1)
    return out, weights


def attention_macs(queries: int, keys: int, width: int) -> int:
    """Logits plus weighted sum, summed over heads."""
    return 2 * queries * keys * width
