"""Paired bootstrap over per-image metric differences.

Resamples are drawn in fixed-size shards, each from its own counter-based
Philox stream spawned from the seed. Shards are merged in index order, so the
result depends only on (diffs, n_resamples, seed, shard size), never on the
number of worker threads.
"""
import logging
import math
from collections.abc import Sequence

import numpy as np

from cea_kit.core.config import settings
from cea_kit.core.constants import DEFAULT_BOOTSTRAP_RESAMPLES, DEFAULT_CONFIDENCE
from cea_kit.core.errors import ConfigError
from cea_kit.schemas.objectives import BootstrapResult
from cea_kit.tasks.runner import run_parallel

logger = logging.getLogger(__name__)


def _shard_means(diffs: np.ndarray, count: int, seed: np.random.SeedSequence) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(seed))
    indices = rng.integers(0, diffs.size, size=(count, diffs.size))
    return diffs[indices].mean(axis=1)


def resampled_means(
    diffs: np.ndarray, n_resamples: int, seed: int, shard_size: int | None = None, threads: int = 1
) -> np.ndarray:
    """Means of ``n_resamples`` with-replacement resamples of ``diffs``."""
    shard_size = shard_size or settings.BOOTSTRAP_SHARD_SIZE
    n_shards = math.ceil(n_resamples / shard_size)
    children = np.random.SeedSequence(seed).spawn(n_shards)
    counts = [min(shard_size, n_resamples - i * shard_size) for i in range(n_shards)]
    shards = run_parallel(
        lambda job: _shard_means(diffs, job[0], job[1]),
        list(zip(counts, children)),
        threads=threads,
        context={"operation": "bootstrap", "resamples": n_resamples},
    )
    return np.concatenate(shards)


def paired_bootstrap(
    diffs: Sequence[float] | np.ndarray,
    n_resamples: int = DEFAULT_BOOTSTRAP_RESAMPLES,
    ci: float = DEFAULT_CONFIDENCE,
    seed: int = 0,
    shard_size: int | None = None,
    threads: int = 1,
) -> BootstrapResult:
    """Percentile confidence interval and one-sided probability for the mean difference.

    ``lo``/``hi`` are the ``(1-ci)/2`` and ``(1+ci)/2`` linear-interpolation
    quantiles of the resampled means; ``p_boot`` is the fraction of resampled
    means <= 0. When no resampled mean is <= 0, ``p_boot`` is 0 and flagged as
    a bound (< 1/n_resamples).
    """
    values = np.asarray(diffs, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise ConfigError("paired bootstrap needs at least one difference")
    if not np.all(np.isfinite(values)):
        raise ConfigError("paired bootstrap differences must be finite")
    if n_resamples < 1:
        raise ConfigError(f"n_resamples must be >= 1, got {n_resamples}")
    if not 0.0 < ci < 1.0:
        raise ConfigError(f"ci must lie in (0, 1), got {ci}")

    means = resampled_means(values, n_resamples, seed, shard_size=shard_size, threads=threads)
    tail = (1.0 - ci) / 2.0
    lo, hi = np.quantile(means, [tail, 1.0 - tail], method="linear")
    at_or_below = int(np.count_nonzero(means <= 0.0))
    result = BootstrapResult(
        mean=float(values.mean()),
        lo=float(lo),
        hi=float(hi),
        p_boot=at_or_below / n_resamples,
        p_boot_is_bound=at_or_below == 0,
        n=int(values.size),
        n_resamples=n_resamples,
        ci=ci,
        seed=seed,
    )
    logger.debug(f"Bootstrap: mean={result.mean:.4f} CI=[{result.lo:.4f}, {result.hi:.4f}] p={result.p_boot_label()}")
    return result
