"""Tests for the evaluation, bootstrap, benchmark, property, training and ablation services."""
import json
import math

import numpy as np
import pytest

from cea_kit.core.constants import GROUP_AVERAGE, GROUP_DOUBLE, GROUP_SINGLE, GROUP_TRIPLE
from cea_kit.core.errors import ConfigError
from cea_kit.degradations import ToyDataset, dataset_sha256
from cea_kit.degradations.dataset import TEST_SPLIT, TRAIN_SPLIT
from cea_kit.schemas.reports import GroupScore
from cea_kit.schemas.run import OptimizerConfig
from cea_kit.services import (
    AblationService,
    BenchmarkService,
    BootstrapService,
    DatasetService,
    EvaluationService,
    PropertyService,
    TrainingService,
)
from cea_kit.services.ablation_service import STUDIES, check_axis, config_diff, median_groups, variant_config
from cea_kit.services.benchmark_service import parse_grid
from cea_kit.services.bootstrap_service import join_records
from cea_kit.services.evaluation_service import read_metrics_csv, summarize, write_metrics_csv

# ----------------------------------------------------------------------------
# Evaluation
# ----------------------------------------------------------------------------


def test_summary_uses_category_means(metric_records):
    """Group means average category means, not images."""
    records = metric_records(
        [
            ("0", 20.0, 0.5, "H"),
            ("1", 22.0, 0.7, "H"),
            ("2", 30.0, 0.9, "R"),
            ("3", 18.0, 0.4, "L+H"),
            ("4", 16.0, 0.2, "L+H+R"),
            ("5", 14.0, 0.3, "L+H+R"),
            ("6", 15.0, 0.1, "L+H+R"),
        ]
    )
    summary = summarize(records, TEST_SPLIT)
    categories = {c.group: c for c in summary.categories}
    assert categories["H"].psnr_db == pytest.approx(21.0)
    assert categories["L+H+R"].psnr_db == pytest.approx(15.0)

    groups = {g.group: g for g in summary.groups}
    assert groups[GROUP_SINGLE].psnr_db == pytest.approx((21.0 + 30.0) / 2)
    assert groups[GROUP_DOUBLE].psnr_db == pytest.approx(18.0)
    assert groups[GROUP_TRIPLE].psnr_db == pytest.approx(15.0)
    assert groups[GROUP_AVERAGE].psnr_db == pytest.approx((21.0 + 30.0 + 18.0 + 15.0) / 4)
    assert groups[GROUP_AVERAGE].psnr_db != pytest.approx(np.mean([r.psnr_db for r in records]))
    assert [c.group for c in summary.categories] == ["H", "R", "L+H", "L+H+R"]


def test_summary_excludes_identical_images(metric_records):
    """Infinite PSNR rows are counted and left out of the PSNR means."""
    records = metric_records([("0", math.inf, 1.0, "H"), ("1", 25.0, 0.8, "H")])
    summary = summarize(records, TEST_SPLIT)
    assert summary.excluded_identical == 1
    assert summary.group(GROUP_AVERAGE).psnr_db == pytest.approx(25.0)


def test_summary_without_categories(metric_records):
    """Untagged records fall back to a plain image average."""
    summary = summarize(metric_records([("0", 20.0, 0.5, None), ("1", 30.0, 0.7, None)]), TEST_SPLIT)
    assert summary.categories == []
    assert summary.group(GROUP_AVERAGE).psnr_db == pytest.approx(25.0)


def test_metrics_csv_round_trip(tmp_path, metric_records):
    """Rows, infinite sentinels and categories survive the CSV."""
    records = metric_records([("00001", 23.5, 0.81, "L+H"), ("00002", math.inf, 1.0, "R")])
    path = tmp_path / "metrics.csv"
    write_metrics_csv(records, path)
    assert path.read_text().splitlines()[0] == "image_id,psnr_db,ssim,category"
    assert read_metrics_csv(path) == records


def test_metrics_csv_missing_column(tmp_path):
    """CSVs need image_id, psnr_db and ssim."""
    path = tmp_path / "bad.csv"
    path.write_text("image_id,psnr_db\n1,20.0\n")
    with pytest.raises(ConfigError):
        read_metrics_csv(path)
    with pytest.raises(ConfigError):
        read_metrics_csv(tmp_path / "missing.csv")


def test_degraded_scores_cover_the_split(tiny_dataset):
    """One finite record per test item."""
    records = EvaluationService().evaluate_degraded(ToyDataset(tiny_dataset), TEST_SPLIT)
    assert len(records) == 3
    assert all(math.isfinite(r.psnr_db) for r in records)


# ----------------------------------------------------------------------------
# Bootstrap
# ----------------------------------------------------------------------------


def test_join_reports_unmatched_ids(metric_records):
    """Ids present on one side only are listed."""
    a = metric_records([("1", 20.0, 0.5, None), ("2", 21.0, 0.5, None)])
    b = metric_records([("2", 20.0, 0.5, None), ("3", 21.0, 0.5, None)])
    with pytest.raises(ConfigError, match=r"\['1'\].*\['3'\]"):
        join_records(a, b)
    with pytest.raises(ConfigError):
        join_records(a + a[:1], a)


def test_constant_one_db_improvement(tmp_path, metric_records):
    """A constant +1 dB gives the point interval [1, 1] and a bounded p_boot."""
    ids = [str(i) for i in range(20)]
    a = metric_records([(i, 26.0, 0.8, "H" if int(i) % 2 else "R") for i in ids])
    b = metric_records([(i, 25.0, 0.8, "H" if int(i) % 2 else "R") for i in ids])
    write_metrics_csv(a, tmp_path / "a.csv")
    write_metrics_csv(b, tmp_path / "b.csv")
    report = BootstrapService().compare(tmp_path / "a.csv", tmp_path / "b.csv", n_resamples=500)
    assert report.pairs == 20
    assert (report.psnr.lo, report.psnr.hi) == pytest.approx((1.0, 1.0))
    assert report.psnr.p_boot_is_bound
    assert report.per_category_psnr == pytest.approx({"H": 1.0, "R": 1.0})
    assert report.unweighted_category_mean_psnr == pytest.approx(1.0)
    assert report.ssim.mean == 0.0


def test_identical_on_both_sides_counts_as_no_difference(metric_records):
    """Two infinite PSNRs give a zero difference; one alone is an error."""
    a = metric_records([("1", math.inf, 1.0, None), ("2", 21.0, 0.5, None)])
    b = metric_records([("1", math.inf, 1.0, None), ("2", 20.0, 0.5, None)])
    report = BootstrapService().compare_records(a, b, n_resamples=100)
    assert report.psnr.mean == pytest.approx(0.5)
    c = metric_records([("1", 30.0, 0.9, None), ("2", 20.0, 0.5, None)])
    with pytest.raises(ConfigError):
        BootstrapService().compare_records(a, c, n_resamples=100)


def test_bootstrap_service_is_deterministic(metric_records, rng):
    """Same seed gives the same report with any thread count."""
    a = metric_records([(str(i), float(v), 0.5, None) for i, v in enumerate(rng.normal(25, 1, 40))])
    b = metric_records([(str(i), float(v), 0.5, None) for i, v in enumerate(rng.normal(24, 1, 40))])
    single = BootstrapService(threads=1).compare_records(a, b, n_resamples=2500, seed=4)
    threaded = BootstrapService(threads=3).compare_records(a, b, n_resamples=2500, seed=4)
    assert single == threaded


# ----------------------------------------------------------------------------
# Benchmark
# ----------------------------------------------------------------------------


def test_parse_grid():
    """Grid points parse as NxD_INxD_OUTxR."""
    assert parse_grid("4096x64x64x8, 256X32X32X4") == [(4096, 64, 64, 8), (256, 32, 32, 4)]
    for bad in ("4096x64x64", "ax64x64x8", "0x64x64x8"):
        with pytest.raises(ConfigError):
            parse_grid(bad)


def test_benchmark_reports_analytic_ratio():
    """N=256, d=64, r=8 reports a MAC ratio of 4."""
    report = BenchmarkService().benchmark([(256, 64, 64, 8), (64, 32, 32, 32)], warmup=1, repeats=3)
    first, full_rank = report.points
    assert first.low_rank_macs == 262_144
    assert first.mac_ratio == 4.0
    assert first.low_rank_seconds > 0.0 and first.speedup > 0.0
    assert full_rank.mac_ratio <= 1.0
    assert (report.warmup, report.repeats) == (1, 3)


# ----------------------------------------------------------------------------
# Properties
# ----------------------------------------------------------------------------


def test_every_property_suite_passes():
    """A clean build passes every suite."""
    report = PropertyService().run()
    failed = [(r.name, r.detail, r.counterexample) for r in report.results if not r.passed]
    assert report.passed, failed
    assert len(report.results) == len(PropertyService().suites)
    assert next(r for r in report.results if r.name == "tokenwise_matrix_equivalence").cases >= 50


def test_gradient_suites_cover_block_and_restorer():
    """The block and whole-restorer gradient suites pass."""
    report = PropertyService().run(["block_gradients", "restorer_gradients"])
    assert report.passed, [(r.name, r.detail, r.counterexample) for r in report.results]
    assert [r.name for r in report.results] == ["block_gradients", "restorer_gradients"]
    assert all(r.detail.startswith("max relative error") for r in report.results)


def test_skipped_rank_norm_breaks_scale_invariance():
    """The injected fault is caught by the scale-invariance suite."""
    report = PropertyService(fault="skip_rank_norm").run(["ranknorm_scale_invariance"])
    assert report.fault == "skip_rank_norm"
    assert not report.passed
    assert report.results[0].counterexample is not None


def test_unknown_suite_or_fault():
    """Unknown names are configuration errors."""
    with pytest.raises(ConfigError):
        PropertyService(fault="flip_signs")
    with pytest.raises(ConfigError):
        PropertyService().run(["no_such_suite"])


# ----------------------------------------------------------------------------
# Ablation planning
# ----------------------------------------------------------------------------


def test_routing_study_plan(tiny_run_config):
    """The routing grid has four variants that differ only along its axis."""
    study, configs = AblationService().plan(tiny_run_config, "routing")
    assert list(configs) == ["Static/Top-2", "Static/Dense", "Dynamic/Top-2", "Dynamic/Dense"]
    assert config_diff(tiny_run_config, configs[study.reference]) == {}
    assert config_diff(tiny_run_config, configs["Static/Top-2"]) == {
        "backbone.cea.factor_source": "static",
        "backbone.cea.routing_rule": "topk_softmax",
    }


@pytest.mark.parametrize("name", sorted(STUDIES))
def test_every_study_plans_within_its_axis(tiny_run_config, name):
    """Every variant of every study validates and stays on its axis."""
    study, configs = AblationService().plan(tiny_run_config, name)
    assert set(configs) == set(study.variants)
    assert study.reference in configs


def test_stray_change_rejected(tiny_run_config):
    """A change outside the axis is refused."""
    study = STUDIES["rank"]
    other = variant_config(tiny_run_config, {"backbone.cea.rank": 4, "optimizer.lr": 0.5})
    with pytest.raises(ConfigError, match="optimizer.lr"):
        check_axis("rank", study, tiny_run_config, other)


def test_unknown_study(tiny_run_config):
    """Only the registered studies can be planned."""
    with pytest.raises(ConfigError):
        AblationService().plan(tiny_run_config, "depth")


def test_ablation_needs_a_dataset(tiny_run_config):
    """Runs without a dataset path are refused."""
    with pytest.raises(ConfigError):
        AblationService().ablate(tiny_run_config.model_copy(update={"dataset": None}), "rank")


def test_median_groups():
    """Group scores are medians over seeds."""
    per_seed = [[GroupScore(group=GROUP_AVERAGE, psnr_db=v, ssim=s, count=4)] for v, s in ((20.0, 0.5), (25.0, 0.9), (21.0, 0.6))]
    (median,) = median_groups(per_seed)
    assert (median.psnr_db, median.ssim, median.count) == (21.0, 0.6, 4)


# ----------------------------------------------------------------------------
# Dataset, training and ablation runs
# ----------------------------------------------------------------------------


def test_dataset_service_default_directory(tmp_path, monkeypatch, dataset_config):
    """Without --out the dataset goes under the default output directory."""
    monkeypatch.chdir(tmp_path)
    manifest = DatasetService().generate(dataset_config, seed=2)
    assert len(manifest.items) == 12
    assert (tmp_path / "runs" / "dataset-2" / "manifest.json").is_file()


def test_training_needs_a_dataset(tiny_run_config):
    """Training refuses a config without a dataset."""
    with pytest.raises(ConfigError):
        TrainingService().train(tiny_run_config.model_copy(update={"dataset": None}))


@pytest.mark.slow
def test_zero_epochs_keeps_the_identity(tmp_path, tiny_run_config):
    """epochs=0 leaves the identity restorer; its scores equal the degraded inputs'."""
    config = tiny_run_config.model_copy(update={"optimizer": OptimizerConfig(epochs=0)})
    artifacts = TrainingService().train(config, tmp_path / "run")
    assert artifacts.steps == 0
    evaluation = EvaluationService()
    records, _ = evaluation.evaluate(artifacts.checkpoint, config.dataset, TEST_SPLIT)
    degraded = evaluation.evaluate_degraded(ToyDataset(config.dataset), TEST_SPLIT)
    assert [r.psnr_db for r in records] == pytest.approx([r.psnr_db for r in degraded])
    assert (tmp_path / "run" / f"metrics_{TEST_SPLIT}.csv").is_file()


@pytest.mark.slow
def test_training_artifacts_and_loss_decrease(tmp_path, tiny_run_config):
    """Full-batch steps lower the loss and every artifact is written."""
    optimizer = OptimizerConfig(epochs=4, batch_size=9, max_steps=4, lr=5e-3, flips=False)
    config = tiny_run_config.model_copy(update={"optimizer": optimizer})
    artifacts = TrainingService().train(config, tmp_path / "run")
    assert artifacts.steps == 4
    assert artifacts.final_loss < artifacts.initial_loss
    for path in (artifacts.checkpoint, artifacts.config, artifacts.loss_log, artifacts.flops, artifacts.environment):
        assert path.is_file()
    assert set(artifacts.metrics) == {TRAIN_SPLIT, TEST_SPLIT}
    assert len(artifacts.loss_log.read_text().splitlines()) == 5
    environment = json.loads(artifacts.environment.read_text())
    assert environment["dataset_sha256"] == dataset_sha256(config.dataset)
    assert environment["seed"] == config.seed


@pytest.mark.slow
def test_training_is_deterministic(tmp_path, tiny_run_config):
    """Same config and seed give bit-identical checkpoints, also with threads."""
    first = TrainingService(threads=1).train(tiny_run_config, tmp_path / "a")
    second = TrainingService(threads=1).train(tiny_run_config, tmp_path / "b")
    threaded = TrainingService(threads=3).train(tiny_run_config, tmp_path / "c")
    assert first.checkpoint.read_bytes() == second.checkpoint.read_bytes()
    assert first.checkpoint.read_bytes() == threaded.checkpoint.read_bytes()


@pytest.mark.slow
def test_ranknorm_ablation(tmp_path, tiny_run_config):
    """A two-variant study reports deltas against the reference and a bootstrap per variant."""
    config = tiny_run_config.model_copy(update={"optimizer": OptimizerConfig(epochs=1, batch_size=3, max_steps=1)})
    report = AblationService().ablate(config, "ranknorm", seeds=[0, 1], out_dir=tmp_path / "study")
    assert [v.name for v in report.variants] == ["w/o RankNorm", "RankNorm"]
    reference = report.variant("RankNorm")
    assert reference.delta_psnr == 0.0
    assert reference.bootstrap is None
    other = report.variant("w/o RankNorm")
    assert other.changes == {"backbone.cea.rank_norm": False}
    assert other.bootstrap.n == 2 * 3
    assert [g.group for g in other.groups][-1] == GROUP_AVERAGE
    assert report.dataset_sha256 == dataset_sha256(config.dataset)
    assert (tmp_path / "study" / "ablation.json").is_file()
    assert (tmp_path / "study" / "w_o RankNorm" / "seed-1" / "checkpoint.ceat").is_file()
