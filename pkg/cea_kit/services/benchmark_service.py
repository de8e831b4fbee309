"""Benchmark service: low-rank assembly vs a materialized dense dynamic projection."""
import logging
import time
from collections.abc import Callable, Iterable

import numpy as np

from cea_kit.core.config import settings
from cea_kit.core.errors import ConfigError
from cea_kit.models.assembly import dense_macs, low_rank_macs
from cea_kit.schemas.reports import BenchPoint, BenchReport
from cea_kit.services.base import BaseService

logger = logging.getLogger(__name__)

# (N, d_in, d_out, r)
DEFAULT_GRID: tuple[tuple[int, int, int, int], ...] = (
    (256, 64, 64, 8),
    (4096, 64, 64, 8),
    (4096, 256, 256, 8),
    (4096, 64, 64, 16),
    (1024, 32, 32, 32),
)


def median_seconds(fn: Callable[[], object], warmup: int, repeats: int) -> float:
    for _ in range(warmup):
        fn()
    timings = np.empty(repeats)
    for i in range(repeats):
        start = time.perf_counter()
        fn()
        timings[i] = time.perf_counter() - start
    return float(np.median(timings))


def parse_grid(spec: str) -> list[tuple[int, int, int, int]]:
    """``"4096x64x64x8,256x64x64x8"`` → [(N, d_in, d_out, r), ...]."""
    points = []
    for chunk in spec.split(","):
        parts = chunk.strip().lower().split("x")
        try:
            values = tuple(int(p) for p in parts)
        except ValueError as e:
            raise ConfigError(f"bad grid point {chunk!r}; expected NxD_INxD_OUTxR") from e
        if len(values) != 4 or min(values) < 1:
            raise ConfigError(f"bad grid point {chunk!r}; expected four positive integers NxD_INxD_OUTxR")
        points.append(values)
    return points


class BenchmarkService(BaseService):
    """Service timing the two assembly formulations."""

    def measure(self, n: int, d_in: int, d_out: int, rank: int, warmup: int, repeats: int, seed: int = 0) -> BenchPoint:
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, d_in))
        A = rng.normal(size=(d_in, rank))
        B = rng.normal(size=(rank, d_out))

        low = median_seconds(lambda: (X @ A) @ B, warmup, repeats)
        dense = median_seconds(lambda: X @ (A @ B), warmup, repeats)
        lr_macs, d_macs = low_rank_macs(n, d_in, d_out, rank), dense_macs(n, d_in, d_out)
        point = BenchPoint(
            tokens=n,
            d_in=d_in,
            d_out=d_out,
            rank=rank,
            low_rank_macs=lr_macs,
            dense_macs=d_macs,
            mac_ratio=d_macs / lr_macs,
            low_rank_seconds=low,
            dense_seconds=dense,
            speedup=dense / low if low > 0 else float("inf"),
        )
        logger.info(
            f"N={n} d_in={d_in} d_out={d_out} r={rank}: MAC ratio {point.mac_ratio:.2f}, "
            f"measured speedup {point.speedup:.2f}x"
        )
        return point

    def benchmark(
        self,
        grid: Iterable[tuple[int, int, int, int]] | None = None,
        warmup: int | None = None,
        repeats: int | None = None,
        seed: int = 0,
    ) -> BenchReport:
        """cmd_bench: analytic MACs and median wall time over a grid.

        Points run one after another on the calling thread so timings do not
        compete for cores.

        Args:
            grid: (N, d_in, d_out, r) points; defaults to DEFAULT_GRID
            warmup: Untimed iterations (defaults to settings.BENCH_WARMUP)
            repeats: Timed iterations (defaults to settings.BENCH_REPEATS)
            seed: Seed of the random operands

        Returns:
            BenchReport with one BenchPoint per grid point
        """
        warmup = settings.BENCH_WARMUP if warmup is None else warmup
        repeats = settings.BENCH_REPEATS if repeats is None else repeats
        if warmup < 0 or repeats < 1:
            raise ConfigError(f"need warmup >= 0 and repeats >= 1, got {warmup}/{repeats}")
        points = [self.measure(*p, warmup=warmup, repeats=repeats, seed=seed) for p in (grid or DEFAULT_GRID)]
        return BenchReport(warmup=warmup, repeats=repeats, points=points)
