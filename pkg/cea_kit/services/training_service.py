"""Training service: optimizes a restorer on a toy dataset and writes run artifacts."""
import csv
import json
import logging
import math
import platform
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pydantic
import scipy

from cea_kit import __version__
from cea_kit.autograd.tensor import Tape, Tensor, grad
from cea_kit.core.config import settings
from cea_kit.core.errors import ConfigError, NumericError
from cea_kit.degradations.dataset import TEST_SPLIT, TRAIN_SPLIT, ToyDataset
from cea_kit.metrics.losses import loss_total
from cea_kit.models.backbone import Restorer
from cea_kit.models.cost import flop_report
from cea_kit.models.optim import Adam
from cea_kit.models.parameters import rng_for
from cea_kit.schemas.run import RunArtifacts, RunConfig
from cea_kit.services.base import BaseService
from cea_kit.services.evaluation_service import EvaluationService, write_metrics_csv
from cea_kit.tasks.runner import run_parallel

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.ceat"


@dataclass(frozen=True)
class _Sample:
    index: int
    degraded: np.ndarray
    clean: np.ndarray


def first_non_finite(output: Tensor, params: list[Tensor]) -> str:
    """Name of the first non-finite tensor: a parameter, else the earliest tape node."""
    for p in params:
        if not np.all(np.isfinite(p.data)):
            return p.name or "unnamed parameter"
    for position, node in enumerate(Tape.record(output).nodes):
        if not np.all(np.isfinite(node.data)):
            if node.name:
                return node.name
            return f"{type(node.creator).__name__} output (tape node {position})"
    return "loss"


def total_steps(config: RunConfig, n_train: int) -> int:
    opt = config.optimizer
    per_epoch = math.ceil(n_train / opt.batch_size) if n_train else 0
    steps = opt.epochs * per_epoch
    return min(steps, opt.max_steps) if opt.max_steps is not None else steps


class TrainingService(BaseService):
    """Service for training restorer variants."""

    def __init__(self, threads: int | None = None):
        super().__init__(threads)
        self.evaluation_service = EvaluationService(threads)

    def _sample_gradients(
        self, restorer: Restorer, params: list[Tensor], sample: _Sample, config: RunConfig
    ) -> tuple[float, list[np.ndarray]]:
        loss = loss_total(restorer(Tensor(sample.degraded)), Tensor(sample.clean), config.loss)
        value = loss.item()
        if not math.isfinite(value):
            name = first_non_finite(loss, params)
            raise NumericError(f"non-finite loss {value} on training item {sample.index}; first non-finite tensor: {name}", name)
        grads = grad(loss, params)
        for p, g in zip(params, grads):
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for {p.name} on training item {sample.index}", p.name)
        return value, grads

    def fit(self, restorer: Restorer, dataset: ToyDataset, config: RunConfig) -> list[dict[str, float]]:
        """Optimize ``restorer`` in place; returns the per-step loss log.

        Gradients of a batch are computed per sample (in parallel when
        threads > 1) and summed in sample order, so the result does not depend
        on the thread count.
        """
        opt = config.optimizer
        items = dataset.split(TRAIN_SPLIT)
        pairs = [dataset.load_pair(item) for item in items]
        steps = total_steps(config, len(items))
        params = restorer.state.tensors()
        optimizer = Adam(params, lr=opt.lr, betas=opt.betas, total_steps=steps)
        rng = rng_for(config.seed, "training.order")
        log: list[dict[str, float]] = []
        step = 0

        for epoch in range(opt.epochs):
            if step >= steps:
                break
            order = rng.permutation(len(items))
            for start in range(0, len(order), opt.batch_size):
                if step >= steps:
                    break
                batch: list[_Sample] = []
                for index in order[start : start + opt.batch_size]:
                    clean, degraded = pairs[index]
                    if opt.flips:
                        if rng.random() < 0.5:
                            clean, degraded = clean[:, ::-1], degraded[:, ::-1]
                        if rng.random() < 0.5:
                            clean, degraded = clean[::-1], degraded[::-1]
                    batch.append(_Sample(index=int(index), degraded=degraded, clean=clean))

                results = run_parallel(
                    lambda s: self._sample_gradients(restorer, params, s, config),
                    batch,
                    threads=self.threads,
                    context={"operation": "train_step", "step": step},
                )
                summed = [np.zeros_like(p.data) for p in params]
                for _, grads in results:
                    for acc, g in zip(summed, grads):
                        acc += g
                mean_loss = sum(value for value, _ in results) / len(results)
                lr = optimizer.step([g / len(results) for g in summed])
                log.append({"step": step, "epoch": epoch, "loss": mean_loss, "lr": lr})
                if step % 25 == 0:
                    logger.info(f"step {step}/{steps} epoch {epoch} loss {mean_loss:.5f} lr {lr:.2e}")
                step += 1
        return log

    def train(self, config: RunConfig, out_dir: Path | None = None) -> RunArtifacts:
        """cmd_train: train the configured variant and write its run directory.

        Args:
            config: Run configuration (dataset path required)
            out_dir: Run directory; defaults to ``config.output_dir`` or
                ``settings.DEFAULT_OUTPUT_DIR / seed-<seed>``

        Returns:
            Paths of the written artifacts plus first/last step losses
        """
        if config.dataset is None:
            raise ConfigError("training needs a dataset path (--set dataset=<dir>)")
        run_dir = Path(out_dir or config.output_dir or settings.DEFAULT_OUTPUT_DIR / f"seed-{config.seed}")
        return self._execute_with_error_handling(f"training into {run_dir}", self._train, config, run_dir)

    def _train(self, config: RunConfig, run_dir: Path) -> RunArtifacts:
        dataset = ToyDataset(config.dataset)
        size = dataset.manifest.config.image_size
        backbone = config.backbone.for_resolution(size, size)
        restorer = Restorer(backbone, seed=config.seed)
        logger.info(
            f"🚀 Training CEA={backbone.cea.targets_label()} source={backbone.cea.factor_source.value} "
            f"routing={backbone.cea.routing_rule.value} seed={config.seed} ({restorer.state.count()} parameters)"
        )

        log = self.fit(restorer, dataset, config)

        run_dir.mkdir(parents=True, exist_ok=True)
        artifacts = RunArtifacts(
            run_dir=run_dir,
            checkpoint=run_dir / CHECKPOINT_NAME,
            config=run_dir / "config.json",
            loss_log=run_dir / "loss_log.csv",
            flops=run_dir / "flops.json",
            environment=run_dir / "environment.json",
            initial_loss=log[0]["loss"] if log else None,
            final_loss=log[-1]["loss"] if log else None,
            steps=len(log),
        )
        restorer.state.save(artifacts.checkpoint)
        artifacts.config.write_text(config.model_dump_json(indent=2) + "\n", encoding="utf-8")
        with open(artifacts.loss_log, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["step", "epoch", "loss", "lr"])
            for row in log:
                writer.writerow([row["step"], row["epoch"], repr(row["loss"]), repr(row["lr"])])
        artifacts.flops.write_text(flop_report(backbone, size, size).model_dump_json(indent=2) + "\n", encoding="utf-8")
        artifacts.environment.write_text(
            json.dumps(self._environment(config, dataset), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

        for split in (TRAIN_SPLIT, TEST_SPLIT):
            records = self.evaluation_service.evaluate_restorer(restorer, dataset, split)
            path = run_dir / f"metrics_{split}.csv"
            write_metrics_csv(records, path)
            artifacts.metrics[split] = path

        logger.info(f"✅ Training finished after {len(log)} steps; artifacts in {run_dir}")
        return artifacts

    def _environment(self, config: RunConfig, dataset: ToyDataset) -> dict:
        return {
            "cea_kit": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pydantic": pydantic.VERSION,
            "seed": config.seed,
            "threads": self.threads,
            "dataset_sha256": dataset.sha256(),
            "settings": settings.describe(),
        }
