"""Evaluation service: per-image metrics and category-wise aggregation."""
import csv
import logging
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from cea_kit.autograd.tensor import Tensor
from cea_kit.core.constants import GROUP_AVERAGE, GROUP_DOUBLE, GROUP_SINGLE, GROUP_TRIPLE
from cea_kit.core.errors import ConfigError
from cea_kit.degradations.dataset import ToyDataset
from cea_kit.metrics.quality import psnr, ssim
from cea_kit.models.backbone import Restorer
from cea_kit.models.parameters import ParameterStore
from cea_kit.schemas.degradation import ManifestItem
from cea_kit.schemas.objectives import MetricRecord
from cea_kit.schemas.reports import EvaluationSummary, GroupScore
from cea_kit.schemas.run import RunConfig
from cea_kit.services.base import BaseService
from cea_kit.tasks.runner import run_parallel

logger = logging.getLogger(__name__)

CSV_FIELDS = ("image_id", "psnr_db", "ssim", "category")
GROUP_BY_LENGTH = {1: GROUP_SINGLE, 2: GROUP_DOUBLE, 3: GROUP_TRIPLE}


# ============================================================================
# CSV IO
# ============================================================================


def write_metrics_csv(records: list[MetricRecord], path: Path) -> None:
    """Header ``image_id,psnr_db,ssim[,category]``; floats written with ``repr``."""
    tagged = any(r.category is not None for r in records)
    fields = CSV_FIELDS if tagged else CSV_FIELDS[:3]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for r in records:
            row = [r.image_id, repr(r.psnr_db), repr(r.ssim)]
            if tagged:
                row.append(r.category or "")
            writer.writerow(row)


def read_metrics_csv(path: Path) -> list[MetricRecord]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = {"image_id", "psnr_db", "ssim"} - set(reader.fieldnames or [])
            if missing:
                raise ConfigError(f"{path}: missing columns {sorted(missing)}")
            return [
                MetricRecord(
                    image_id=row["image_id"],
                    psnr_db=float(row["psnr_db"]),
                    ssim=float(row["ssim"]),
                    category=row.get("category") or None,
                )
                for row in reader
            ]
    except OSError as e:
        raise ConfigError(f"cannot read metrics CSV {path}: {e}") from e
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"{path}: malformed row: {e}") from e


# ============================================================================
# Aggregation
# ============================================================================


def _mean(values: list[float]) -> float:
    finite = [v for v in values if math.isfinite(v)]
    return float(np.mean(finite)) if finite else math.inf


def summarize(records: list[MetricRecord], split: str) -> EvaluationSummary:
    """Category means, then group means as means of category means.

    Identical images (infinite PSNR) are left out of PSNR means.
    """
    by_category: dict[str, list[MetricRecord]] = defaultdict(list)
    for r in records:
        if r.category is not None:
            by_category[r.category].append(r)

    categories = [
        GroupScore(
            group=name,
            psnr_db=_mean([r.psnr_db for r in rows]),
            ssim=float(np.mean([r.ssim for r in rows])),
            count=len(rows),
        )
        for name, rows in sorted(by_category.items(), key=lambda kv: (kv[0].count("+"), kv[0]))
    ]

    groups: list[GroupScore] = []
    for length, label in GROUP_BY_LENGTH.items():
        members = [c for c in categories if c.group.count("+") + 1 == length]
        if members:
            groups.append(
                GroupScore(
                    group=label,
                    psnr_db=_mean([c.psnr_db for c in members]),
                    ssim=float(np.mean([c.ssim for c in members])),
                    count=len(members),
                )
            )
    if categories:
        groups.append(
            GroupScore(
                group=GROUP_AVERAGE,
                psnr_db=_mean([c.psnr_db for c in categories]),
                ssim=float(np.mean([c.ssim for c in categories])),
                count=len(categories),
            )
        )
    elif records:
        groups.append(
            GroupScore(
                group=GROUP_AVERAGE,
                psnr_db=_mean([r.psnr_db for r in records]),
                ssim=float(np.mean([r.ssim for r in records])),
                count=len(records),
            )
        )

    return EvaluationSummary(
        split=split,
        images=len(records),
        categories=categories,
        groups=groups,
        excluded_identical=sum(1 for r in records if r.is_identical),
    )


# ============================================================================
# Service
# ============================================================================


class EvaluationService(BaseService):
    """Service for scoring restorers on dataset splits."""

    def evaluate_restorer(self, restorer: Restorer, dataset: ToyDataset, split: str) -> list[MetricRecord]:
        """Restore every item of ``split`` and score it against the clean image.

        Args:
            restorer: Network to evaluate (read-only)
            dataset: Dataset to read from
            split: Split name (train or test)

        Returns:
            One MetricRecord per item, in manifest order
        """
        items = dataset.split(split)

        def score(item: ManifestItem) -> MetricRecord:
            clean, degraded = dataset.load_pair(item)
            restored = np.clip(restorer(Tensor(degraded)).data, 0.0, 1.0)
            return MetricRecord(image_id=item.id, psnr_db=psnr(restored, clean), ssim=ssim(restored, clean), category=item.category)

        return run_parallel(score, items, threads=self.threads, context={"operation": "evaluate", "split": split})

    def evaluate_degraded(self, dataset: ToyDataset, split: str) -> list[MetricRecord]:
        """Scores of the degraded inputs themselves (the identity restorer)."""
        records = []
        for item in dataset.split(split):
            clean, degraded = dataset.load_pair(item)
            records.append(MetricRecord(image_id=item.id, psnr_db=psnr(degraded, clean), ssim=ssim(degraded, clean), category=item.category))
        return records

    def load_restorer(self, checkpoint: Path, image_size: int) -> Restorer:
        """Rebuild a restorer from a checkpoint and the ``config.json`` next to it."""
        config_path = Path(checkpoint).parent / "config.json"
        if not config_path.is_file():
            raise ConfigError(f"no config.json next to checkpoint {checkpoint}")
        config = RunConfig.model_validate_json(config_path.read_text(encoding="utf-8"))
        backbone = config.backbone.for_resolution(image_size, image_size)
        return Restorer(backbone, state=ParameterStore.from_file(checkpoint, seed=config.seed))

    def evaluate(
        self, checkpoint: Path, dataset_dir: Path, split: str, out: Path | None = None
    ) -> tuple[list[MetricRecord], EvaluationSummary]:
        """cmd_eval: score a checkpoint on a split and write ``metrics_<split>.csv``.

        Args:
            checkpoint: Checkpoint container written by a training run
            dataset_dir: Dataset directory
            split: Split name
            out: Output directory (defaults to the checkpoint's directory)

        Returns:
            (records, summary)
        """

        def run() -> tuple[list[MetricRecord], EvaluationSummary]:
            dataset = ToyDataset(dataset_dir)
            restorer = self.load_restorer(checkpoint, dataset.manifest.config.image_size)
            records = self.evaluate_restorer(restorer, dataset, split)
            out_dir = Path(out) if out is not None else Path(checkpoint).parent
            out_dir.mkdir(parents=True, exist_ok=True)
            write_metrics_csv(records, out_dir / f"metrics_{split}.csv")
            summary = summarize(records, split)
            (out_dir / f"summary_{split}.json").write_text(summary.model_dump_json(indent=2) + "\n", encoding="utf-8")
            logger.info(f"✅ Evaluated {len(records)} images of split {split!r}")
            return records, summary

        return self._execute_with_error_handling(f"evaluating {checkpoint} on {split}", run)
