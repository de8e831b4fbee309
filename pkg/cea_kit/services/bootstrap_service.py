"""Bootstrap service: paired comparison of two per-image metric CSVs."""
import logging
from collections import defaultdict
from pathlib import Path

import numpy as np

from cea_kit.core.config import settings
from cea_kit.core.constants import DEFAULT_CONFIDENCE
from cea_kit.core.errors import ConfigError
from cea_kit.metrics.bootstrap import paired_bootstrap
from cea_kit.schemas.objectives import MetricRecord
from cea_kit.schemas.reports import BootstrapReport
from cea_kit.services.base import BaseService
from cea_kit.services.evaluation_service import read_metrics_csv

logger = logging.getLogger(__name__)


def join_records(
    records_a: list[MetricRecord], records_b: list[MetricRecord]
) -> list[tuple[MetricRecord, MetricRecord]]:
    """Pairs matched on image_id, in the order of ``records_a``.

    Raises ConfigError listing every id present on one side only.
    """
    by_id_a = {r.image_id: r for r in records_a}
    by_id_b = {r.image_id: r for r in records_b}
    if len(by_id_a) != len(records_a) or len(by_id_b) != len(records_b):
        raise ConfigError("metric CSVs must not repeat an image_id")
    only_a = sorted(set(by_id_a) - set(by_id_b))
    only_b = sorted(set(by_id_b) - set(by_id_a))
    if only_a or only_b:
        raise ConfigError(f"unmatched image ids: only in first CSV {only_a}, only in second CSV {only_b}")
    return [(r, by_id_b[r.image_id]) for r in records_a]


def psnr_difference(a: MetricRecord, b: MetricRecord) -> float:
    """Per-image PSNR difference; two identical reconstructions count as no difference."""
    if a.is_identical and b.is_identical:
        return 0.0
    return a.psnr_db - b.psnr_db


class BootstrapService(BaseService):
    """Service for paired significance tests between two runs."""

    def compare_records(
        self,
        records_a: list[MetricRecord],
        records_b: list[MetricRecord],
        n_resamples: int | None = None,
        ci: float = DEFAULT_CONFIDENCE,
        seed: int = 0,
        labels: tuple[str, str] = ("a", "b"),
    ) -> BootstrapReport:
        """Bootstrap the a - b differences of PSNR and SSIM."""
        pairs = join_records(records_a, records_b)
        if not pairs:
            raise ConfigError("metric CSVs contain no rows")
        n_resamples = n_resamples or settings.BOOTSTRAP_RESAMPLES
        psnr_diffs = np.array([psnr_difference(a, b) for a, b in pairs])
        ssim_diffs = np.array([a.ssim - b.ssim for a, b in pairs])
        if not np.all(np.isfinite(psnr_diffs)):
            bad = [a.image_id for (a, _), d in zip(pairs, psnr_diffs) if not np.isfinite(d)]
            raise ConfigError(f"PSNR difference is infinite for images {bad} (identical on one side only)")

        by_category: dict[str, list[float]] = defaultdict(list)
        for (a, b), d in zip(pairs, psnr_diffs):
            if a.category is not None:
                by_category[a.category].append(float(d))
        per_category = {name: float(np.mean(values)) for name, values in sorted(by_category.items())}

        report = BootstrapReport(
            csv_a=labels[0],
            csv_b=labels[1],
            pairs=len(pairs),
            psnr=paired_bootstrap(psnr_diffs, n_resamples=n_resamples, ci=ci, seed=seed, threads=self.threads),
            ssim=paired_bootstrap(ssim_diffs, n_resamples=n_resamples, ci=ci, seed=seed, threads=self.threads),
            per_category_psnr=per_category,
            unweighted_category_mean_psnr=float(np.mean(list(per_category.values()))) if per_category else None,
        )
        logger.info(
            f"Bootstrap over {report.pairs} pairs: PSNR diff {report.psnr.mean:.4f} dB "
            f"CI [{report.psnr.lo:.4f}, {report.psnr.hi:.4f}] p_boot {report.psnr.p_boot_label()}"
        )
        return report

    def compare(
        self,
        csv_a: Path,
        csv_b: Path,
        n_resamples: int | None = None,
        ci: float = DEFAULT_CONFIDENCE,
        seed: int = 0,
    ) -> BootstrapReport:
        """cmd_bootstrap: join two metric CSVs on image_id and bootstrap the differences.

        Args:
            csv_a: First CSV (differences are a - b)
            csv_b: Second CSV
            n_resamples: Resamples (defaults to settings.BOOTSTRAP_RESAMPLES)
            ci: Confidence level
            seed: Resampling seed

        Returns:
            BootstrapReport for PSNR and SSIM
        """
        return self._execute_with_error_handling(
            f"bootstrapping {csv_a} against {csv_b}",
            lambda: self.compare_records(
                read_metrics_csv(Path(csv_a)),
                read_metrics_csv(Path(csv_b)),
                n_resamples=n_resamples,
                ci=ci,
                seed=seed,
                labels=(str(csv_a), str(csv_b)),
            ),
        )
