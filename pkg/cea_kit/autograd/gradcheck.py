"""Finite-difference gradient oracle."""
from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence

import numpy as np

from cea_kit.autograd.tensor import Tensor, grad
from cea_kit.core.errors import ConfigError, EvaluationError
from cea_kit.schemas.reports import GradCheckEntry, GradCheckReport

logger = logging.getLogger(__name__)

EPS_RANGE = (1e-6, 1e-4)


def _evaluate(f: Callable[[], Tensor]) -> float:
    value = f()
    if value.size != 1:
        raise EvaluationError(f"grad_check needs a scalar function, got shape {value.shape}")
    scalar = value.item()
    if not math.isfinite(scalar):
        raise EvaluationError(f"function value is not finite ({scalar})")
    return scalar


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    tol: float = 1e-6,
    atol: float = 1e-8,
    sample_fraction: float = 1.0,
    rng: np.random.Generator | None = None,
    names: Sequence[str] | None = None,
) -> GradCheckReport:
    """Compare tape gradients of ``f`` with central finite differences.

    ``f`` is re-evaluated with each checked entry of each parameter nudged by
    ``±eps``; the numeric derivative is ``(f(x+eps) - f(x-eps)) / (2 eps)``.
    The relative error of an entry is ``|analytic - numeric|`` divided by
    ``max(|analytic|, |numeric|, atol / tol)``: an entry fails when its error
    exceeds both ``tol`` relative to the gradient and the ``atol`` noise floor
    of the differences. With ``sample_fraction < 1`` a random subset of entries
    (at least one per parameter) is checked.
    """
    if not EPS_RANGE[0] <= eps <= EPS_RANGE[1]:
        raise ConfigError(f"eps must lie in [{EPS_RANGE[0]}, {EPS_RANGE[1]}], got {eps}")
    if tol <= 0.0 or atol <= 0.0:
        raise ConfigError(f"tol and atol must be positive, got tol={tol}, atol={atol}")
    if not 0.0 < sample_fraction <= 1.0:
        raise ConfigError(f"sample_fraction must lie in (0, 1], got {sample_fraction}")
    rng = rng or np.random.default_rng(0)
    floor = atol / tol
    names = list(names) if names is not None else [p.name or f"param_{i}" for i, p in enumerate(params)]

    base = f()
    if not np.all(np.isfinite(base.data)):
        raise EvaluationError("function value is not finite at the base point")
    analytic = grad(base, params)

    entries: list[GradCheckEntry] = []
    for name, param, param_grad in zip(names, params, analytic):
        original = param.data.copy()
        flat_indices = np.arange(param.size)
        if sample_fraction < 1.0:
            count = max(1, int(round(sample_fraction * param.size)))
            flat_indices = np.sort(rng.choice(param.size, size=count, replace=False))

        max_rel = 0.0
        max_abs = 0.0
        try:
            for flat in flat_indices:
                index = np.unravel_index(flat, param.shape)
                shifted = original.copy()
                shifted[index] += eps
                param.assign(shifted)
                f_plus = _evaluate(f)
                shifted[index] = original[index] - eps
                param.assign(shifted)
                f_minus = _evaluate(f)
                numeric = (f_plus - f_minus) / (2.0 * eps)
                exact = float(param_grad[index])
                abs_err = abs(exact - numeric)
                max_abs = max(max_abs, abs_err)
                max_rel = max(max_rel, abs_err / max(abs(exact), abs(numeric), floor))
        finally:
            param.assign(original)

        passed = max_rel <= tol
        if not passed:
            logger.debug(f"grad_check: {name} max relative error {max_rel:.3e} > tol {tol:.1e}")
        entries.append(
            GradCheckEntry(
                name=name,
                checked=int(len(flat_indices)),
                max_rel_error=max_rel,
                max_abs_error=max_abs,
                passed=passed,
            )
        )

    return GradCheckReport(eps=eps, tol=tol, entries=entries, passed=all(e.passed for e in entries))
