"""Sparse mixture-of-experts augmentation of a linear projection.

Reference baseline only: ``Y_n = X_n W + sum_i g_i(X_n) E_i(X_n)`` with a
discrete set of small two-layer experts selected by a top-k router.
"""
from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from cea_kit.autograd import functional as F
from cea_kit.autograd.tensor import Tensor, as_tensor
from cea_kit.core.errors import DimensionError
from cea_kit.models.assembly import topk_softmax

Router = Callable[[Tensor], Tensor]


@dataclass(frozen=True)
class TwoLayerExpert:
    """``E(x) = act(x W1) W2``; ``activation=False`` makes the expert linear."""

    w1: Tensor
    w2: Tensor
    activation: bool = True

    def __call__(self, X: Tensor) -> Tensor:
        hidden = F.matmul(X, self.w1)
        if self.activation:
            hidden = F.gelu(hidden)
        return F.matmul(hidden, self.w2)

    @classmethod
    def linear(cls, weight: Tensor) -> "TwoLayerExpert":
        """Single linear map ``x M`` expressed as an expert."""
        eye = as_tensor(np.eye(weight.shape[0]))
        return cls(w1=eye, w2=weight, activation=False)


@dataclass(frozen=True)
class TopKRouter:
    """Softmax gate over experts, truncated to the ``k`` largest and renormalized."""

    w_gate: Tensor
    k: int

    def __call__(self, X: Tensor) -> Tensor:
        return topk_softmax(F.matmul(X, self.w_gate), self.k)


@dataclass(frozen=True)
class FixedRouter:
    """Hand-set gates, one row per token or one row broadcast to every token."""

    gates: Tensor

    def __call__(self, X: Tensor) -> Tensor:
        if self.gates.shape[0] == X.shape[0]:
            return self.gates
        return F.matmul(as_tensor(np.ones((X.shape[0], 1))), self.gates)


def moe_baseline_forward(X: Tensor, W: Tensor, experts: Sequence[TwoLayerExpert], router: Router) -> Tensor:
    """Base projection plus the gated sum of expert outputs."""
    base = F.matmul(X, W)
    gates = router(X)
    if gates.shape != (X.shape[0], len(experts)):
        raise DimensionError(f"router produced gates {gates.shape}, expected {(X.shape[0], len(experts))}")
    out = base
    for i, expert in enumerate(experts):
        if not gates.data[:, i].any():
            continue
        contribution = expert(X)
        if contribution.shape != base.shape:
            raise DimensionError(f"expert {i} output {contribution.shape} != base output {base.shape}")
        out = out + gates[:, i : i + 1] * contribution
    return out
