"""Adam with cosine learning-rate decay."""
from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np

from cea_kit.autograd.tensor import Tensor
from cea_kit.core.constants import ADAM_EPSILON, DEFAULT_BETAS
from cea_kit.core.errors import DimensionError


def cosine_lr(base_lr: float, step: int, total_steps: int) -> float:
    """``base_lr * (1 + cos(pi * step / total)) / 2``; reaches 0 at ``total_steps``."""
    if total_steps <= 0:
        return base_lr
    progress = min(step, total_steps) / total_steps
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * progress))


class Adam:
    """Adam over a fixed list of leaf tensors, updated in place via ``assign``."""

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float,
        betas: tuple[float, float] = DEFAULT_BETAS,
        eps: float = ADAM_EPSILON,
        total_steps: int = 0,
    ):
        self.params = list(params)
        self.base_lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.total_steps = total_steps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    @property
    def lr(self) -> float:
        return cosine_lr(self.base_lr, self.step_count, self.total_steps)

    def step(self, grads: Sequence[np.ndarray]) -> float:
        """Apply one update; returns the learning rate that was used."""
        if len(grads) != len(self.params):
            raise DimensionError(f"got {len(grads)} gradients for {len(self.params)} parameters")
        lr = self.lr
        self.step_count += 1
        t = self.step_count
        correction1 = 1.0 - self.beta1**t
        correction2 = 1.0 - self.beta2**t
        for i, (param, g) in enumerate(zip(self.params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / correction1
            v_hat = self.v[i] / correction2
            param.assign(param.data - lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return lr
