"""Ablation service: train matched variants of one study and compare them."""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from cea_kit.core.config import settings
from cea_kit.core.constants import DEFAULT_ABLATION_SEEDS, GROUP_AVERAGE
from cea_kit.core.errors import ConfigError
from cea_kit.degradations.dataset import TEST_SPLIT, ToyDataset, dataset_sha256
from cea_kit.models.backbone import Restorer
from cea_kit.schemas.objectives import MetricRecord
from cea_kit.schemas.reports import AblationReport, AblationVariant, GroupScore
from cea_kit.schemas.run import RunConfig
from cea_kit.services.base import BaseService
from cea_kit.services.bootstrap_service import BootstrapService
from cea_kit.services.evaluation_service import read_metrics_csv, summarize
from cea_kit.services.training_service import TrainingService

logger = logging.getLogger(__name__)

CEA = "backbone.cea"


@dataclass(frozen=True)
class Study:
    """Named variants, each a set of dotted config changes along ``axis``."""

    axis: tuple[str, ...]
    reference: str
    variants: dict[str, dict[str, Any]] = field(default_factory=dict)


STUDIES: dict[str, Study] = {
    "routing": Study(
        axis=(f"{CEA}.factor_source", f"{CEA}.routing_rule", f"{CEA}.top_k"),
        reference="Dynamic/Dense",
        variants={
            "Static/Top-2": {f"{CEA}.factor_source": "static", f"{CEA}.routing_rule": "topk_softmax", f"{CEA}.top_k": 2},
            "Static/Dense": {f"{CEA}.factor_source": "static", f"{CEA}.routing_rule": "dense_signed"},
            "Dynamic/Top-2": {f"{CEA}.factor_source": "dynamic", f"{CEA}.routing_rule": "topk_softmax", f"{CEA}.top_k": 2},
            "Dynamic/Dense": {f"{CEA}.factor_source": "dynamic", f"{CEA}.routing_rule": "dense_signed"},
        },
    ),
    "generator": Study(
        axis=(f"{CEA}.factor_source", f"{CEA}.generator"),
        reference="CrossAttention",
        variants={
            "GAP+MLP": {f"{CEA}.factor_source": "dynamic", f"{CEA}.generator": "gap_mlp"},
            "CrossAttention": {f"{CEA}.factor_source": "dynamic", f"{CEA}.generator": "cross_attention"},
        },
    ),
    "rank": Study(
        axis=(f"{CEA}.rank",),
        reference="r=8",
        variants={f"r={r}": {f"{CEA}.rank": r} for r in (4, 8, 16)},
    ),
    "targets": Study(
        axis=(f"{CEA}.injection_targets",),
        reference="Q+K",
        variants={
            label: {f"{CEA}.injection_targets": targets}
            for label, targets in (
                ("None", []),
                ("Q", ["Q"]),
                ("K", ["K"]),
                ("V", ["V"]),
                ("Q+K", ["Q", "K"]),
                ("Q+K+V", ["Q", "K", "V"]),
                ("FFN_in", ["FFN_in"]),
            )
        },
    ),
    "ranknorm": Study(
        axis=(f"{CEA}.rank_norm",),
        reference="RankNorm",
        variants={"w/o RankNorm": {f"{CEA}.rank_norm": False}, "RankNorm": {f"{CEA}.rank_norm": True}},
    ),
}


# ============================================================================
# Config helpers
# ============================================================================


def flatten(data: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    """Nested dict → {dotted.key: leaf value}."""
    flat: dict[str, Any] = {}
    for key, value in data.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten(value, f"{path}."))
        else:
            flat[path] = value
    return flat


def config_diff(base: RunConfig, other: RunConfig) -> dict[str, Any]:
    """Dotted keys whose values differ, mapped to the value in ``other``."""
    a, b = flatten(base.model_dump(mode="json")), flatten(other.model_dump(mode="json"))
    return {key: b.get(key) for key in sorted(set(a) | set(b)) if a.get(key) != b.get(key)}


def variant_config(base: RunConfig, changes: dict[str, Any]) -> RunConfig:
    data = base.model_dump(mode="json")
    for dotted, value in changes.items():
        node = data
        *parents, leaf = dotted.split(".")
        for part in parents:
            node = node[part]
        node[leaf] = value
    return RunConfig.model_validate(data)


def check_axis(study_name: str, study: Study, base: RunConfig, config: RunConfig) -> dict[str, Any]:
    """Changes of a variant; raises ConfigError when a key outside the study's axis changed."""
    changes = config_diff(base, config)
    stray = sorted(k for k in changes if k not in study.axis)
    if stray:
        raise ConfigError(f"study {study_name!r} changed keys outside its axis: {stray}")
    return changes


def shared_initialization_mismatches(configs: dict[str, RunConfig], reference: str, image_size: int) -> list[str]:
    """Backbone parameters (outside CEA generators) whose initial values differ from the reference."""
    ref = configs[reference]
    ref_state = Restorer(ref.backbone.for_resolution(image_size, image_size), seed=ref.seed).state
    mismatches = []
    for name, config in configs.items():
        state = Restorer(config.backbone.for_resolution(image_size, image_size), seed=config.seed).state
        for param in state.names():
            if ".cea." in param or param not in ref_state:
                continue
            if not np.array_equal(state[param].data, ref_state[param].data):
                mismatches.append(f"{name}:{param}")
    return mismatches


def median_groups(per_seed: list[list[GroupScore]]) -> list[GroupScore]:
    """Median over seeds of every group present in the first seed."""
    names = [g.group for g in per_seed[0]]
    medians = []
    for name in names:
        scores = [next(g for g in groups if g.group == name) for groups in per_seed]
        medians.append(
            GroupScore(
                group=name,
                psnr_db=float(np.median([s.psnr_db for s in scores])),
                ssim=float(np.median([s.ssim for s in scores])),
                count=scores[0].count,
            )
        )
    return medians


class AblationService(BaseService):
    """Service running ablation studies with matched seeds, budgets and data."""

    def __init__(self, threads: int | None = None):
        super().__init__(threads)
        self.training_service = TrainingService(threads)
        self.bootstrap_service = BootstrapService(threads)

    def plan(self, base: RunConfig, study_name: str) -> tuple[Study, dict[str, RunConfig]]:
        """Variant configs of a study; each differs from ``base`` only along the study axis."""
        if study_name not in STUDIES:
            raise ConfigError(f"unknown study {study_name!r}; choose from {sorted(STUDIES)}")
        study = STUDIES[study_name]
        configs = {name: variant_config(base, changes) for name, changes in study.variants.items()}
        for config in configs.values():
            check_axis(study_name, study, base, config)
        return study, configs

    def ablate(
        self, base: RunConfig, study_name: str, seeds: list[int] | None = None, out_dir: Path | None = None
    ) -> AblationReport:
        """cmd_ablate: train every variant of a study for every seed and compare on the test split.

        Args:
            base: Base run configuration (dataset path required)
            study_name: One of STUDIES
            seeds: Training seeds (defaults to base.seed .. base.seed + 2)
            out_dir: Study directory; runs go to ``<out_dir>/<variant>/seed-<s>``

        Returns:
            AblationReport with median-over-seeds group scores, deltas and
            bootstrap comparisons against the reference variant
        """
        if base.dataset is None:
            raise ConfigError("ablation needs a dataset path (--set dataset=<dir>)")
        seeds = seeds or [base.seed + i for i in range(DEFAULT_ABLATION_SEEDS)]
        out_dir = Path(out_dir or base.output_dir or settings.DEFAULT_OUTPUT_DIR / f"ablate-{study_name}")
        return self._execute_with_error_handling(
            f"running ablation study {study_name}", self._ablate, base, study_name, seeds, out_dir
        )

    def _ablate(self, base: RunConfig, study_name: str, seeds: list[int], out_dir: Path) -> AblationReport:
        study, configs = self.plan(base, study_name)
        dataset = ToyDataset(base.dataset)
        digest = dataset_sha256(base.dataset)
        size = dataset.manifest.config.image_size
        mismatches = shared_initialization_mismatches(configs, study.reference, size)
        if mismatches:
            raise ConfigError(f"variants do not share initial backbone weights: {mismatches[:5]}")
        logger.info(f"🧪 Study {study_name}: {len(configs)} variants x {len(seeds)} seeds = {len(configs) * len(seeds)} runs")

        records: dict[str, dict[int, list[MetricRecord]]] = {}
        for name, config in configs.items():
            records[name] = {}
            for seed in seeds:
                run_dir = out_dir / name.replace("/", "_").replace("+", "_") / f"seed-{seed}"
                artifacts = self.training_service.train(config.model_copy(update={"seed": seed}), run_dir)
                environment = json.loads(artifacts.environment.read_text(encoding="utf-8"))
                if environment["dataset_sha256"] != digest:
                    raise ConfigError(f"dataset changed during the study (variant {name}, seed {seed})")
                records[name][seed] = read_metrics_csv(artifacts.metrics[TEST_SPLIT])

        report = AblationReport(study=study_name, axis=list(study.axis), reference=study.reference, dataset_sha256=digest)
        reference_avg = None
        for name, config in configs.items():
            per_seed_groups = [summarize(records[name][s], TEST_SPLIT).groups for s in seeds]
            groups = median_groups(per_seed_groups)
            avg = next(g for g in groups if g.group == GROUP_AVERAGE)
            if name == study.reference:
                reference_avg = avg.psnr_db
            report.variants.append(
                AblationVariant(
                    name=name,
                    changes=config_diff(base, config),
                    seeds=seeds,
                    groups=groups,
                    per_seed_avg_psnr=[next(g for g in gs if g.group == GROUP_AVERAGE).psnr_db for gs in per_seed_groups],
                )
            )

        pooled_reference = self._pooled(records[study.reference], seeds)
        for variant in report.variants:
            avg = next(g for g in variant.groups if g.group == GROUP_AVERAGE)
            variant.delta_psnr = avg.psnr_db - reference_avg
            if variant.name != study.reference:
                variant.bootstrap = self.bootstrap_service.compare_records(
                    pooled_reference, self._pooled(records[variant.name], seeds), seed=base.seed,
                    labels=(study.reference, variant.name),
                ).psnr

        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "ablation.json").write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
        logger.info(f"✅ Study {study_name} finished; report in {out_dir / 'ablation.json'}")
        return report

    @staticmethod
    def _pooled(by_seed: dict[int, list[MetricRecord]], seeds: list[int]) -> list[MetricRecord]:
        """Records of every seed, paired across variants by (seed, image_id)."""
        return [r.model_copy(update={"image_id": f"{seed}/{r.image_id}"}) for seed in seeds for r in by_seed[seed]]
