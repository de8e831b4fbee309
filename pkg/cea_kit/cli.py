"""Command-line entry point: ``cea-kit generate|train|eval|props|bench|ablate|bootstrap``.

Every command prints a human-readable table (``--json`` prints the JSON report
instead) and always writes the JSON report to ``<out>/<command>_report.json``,
with ``<out>`` defaulting to ``settings.DEFAULT_OUTPUT_DIR``. Exit codes:
0 success, 1 property failure, 2 usage/config error, 3 numeric failure,
4 unexpected internal error.
"""
import argparse
import logging
import math
import sys
from collections.abc import Sequence
from pathlib import Path

from pydantic import BaseModel

from cea_kit import __version__
from cea_kit.core.config import configure_logging, load_dataset_config, load_run_config, settings
from cea_kit.core.constants import DEFAULT_CONFIDENCE, EXIT_INTERNAL_ERROR, EXIT_OK
from cea_kit.core.errors import CeaError, ConfigError, PropertyFailure
from cea_kit.degradations.dataset import TEST_SPLIT
from cea_kit.schemas.reports import (
    AblationReport,
    BenchReport,
    BootstrapReport,
    EvaluationSummary,
    GroupScore,
    PropertyReport,
)
from cea_kit.services import (
    AblationService,
    BenchmarkService,
    BootstrapService,
    DatasetService,
    EvaluationService,
    PropertyService,
    TrainingService,
)
from cea_kit.services.ablation_service import STUDIES
from cea_kit.services.benchmark_service import parse_grid
from cea_kit.services.property_service import FAULTS

logger = logging.getLogger("cea_kit.cli")


# ============================================================================
# Formatting
# ============================================================================


def format_table(headers: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    cells = [[str(h) for h in headers]] + [[_cell(v) for v in row] for row in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]
    lines = ["  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths))) for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _cell(value: object) -> str:
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return f"{value:.4f}"
    return "" if value is None else str(value)


def group_table(groups: list[GroupScore]) -> str:
    return format_table(["group", "PSNR", "SSIM", "n"], [[g.group, g.psnr_db, g.ssim, g.count] for g in groups])


def format_summary(summary: EvaluationSummary) -> str:
    parts = [f"split {summary.split}: {summary.images} images ({summary.excluded_identical} identical excluded)"]
    if summary.categories:
        parts.append(group_table(summary.categories))
    parts.append(group_table(summary.groups))
    return "\n\n".join(parts)


def format_properties(report: PropertyReport) -> str:
    rows = [[r.name, "pass" if r.passed else "FAIL", r.cases, r.detail] for r in report.results]
    header = f"fault injected: {report.fault}\n" if report.fault else ""
    failures = [f"counterexample {r.name}: {r.counterexample}" for r in report.results if r.counterexample]
    return header + format_table(["suite", "status", "cases", "detail"], rows) + ("\n" + "\n".join(failures) if failures else "")


def format_bench(report: BenchReport) -> str:
    rows = [
        [p.tokens, p.d_in, p.d_out, p.rank, p.low_rank_macs, p.dense_macs, p.mac_ratio,
         p.low_rank_seconds * 1e6, p.dense_seconds * 1e6, p.speedup]
        for p in report.points
    ]
    headers = ["N", "d_in", "d_out", "r", "MACs (XA)B", "MACs X(AB)", "MAC ratio", "us (XA)B", "us X(AB)", "speedup"]
    return f"warm-up {report.warmup}, median of {report.repeats} runs\n" + format_table(headers, rows)


def format_bootstrap(report: BootstrapReport) -> str:
    rows = [
        [metric, result.mean, result.lo, result.hi, result.p_boot_label()]
        for metric, result in (("PSNR", report.psnr), ("SSIM", report.ssim))
    ]
    text = f"{report.csv_a} - {report.csv_b}: {report.pairs} pairs, {report.psnr.n_resamples} resamples\n"
    text += format_table(["metric", "mean diff", "lo", "hi", "p_boot"], rows)
    if report.per_category_psnr:
        text += "\n\n" + format_table(["category", "PSNR diff"], list(report.per_category_psnr.items()))
        text += f"\nunweighted category mean: {report.unweighted_category_mean_psnr:.4f}"
    return text


def format_ablation(report: AblationReport) -> str:
    group_names = [g.group for g in report.variants[0].groups] if report.variants else []
    headers = ["variant"] + [f"{g} PSNR/SSIM" for g in group_names] + ["dPSNR", "CI lo", "CI hi", "p_boot"]
    rows = []
    for v in report.variants:
        row: list[object] = [v.name + (" *" if v.name == report.reference else "")]
        row += [f"{g.psnr_db:.2f}/{g.ssim:.4f}" for g in v.groups]
        boot = v.bootstrap
        row += [v.delta_psnr, boot.lo if boot else None, boot.hi if boot else None, boot.p_boot_label() if boot else None]
        rows.append(row)
    return (
        f"study {report.study} (axis {', '.join(report.axis)}; * = reference; dataset {report.dataset_sha256[:12]})\n"
        + format_table(headers, rows)
    )


# ============================================================================
# Commands
# ============================================================================


def _overrides(args: argparse.Namespace) -> list[str]:
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.threads is not None:
        overrides.append(f"threads={args.threads}")
    return overrides


def cmd_generate(args: argparse.Namespace) -> tuple[BaseModel, str]:
    config = load_dataset_config(args.config, args.set)
    manifest = DatasetService(args.threads).generate(config, args.seed or 0, args.out)
    counts = {}
    for item in manifest.items:
        counts[(item.split, item.category)] = counts.get((item.split, item.category), 0) + 1
    rows = [[split, category, n] for (split, category), n in sorted(counts.items())]
    return manifest, format_table(["split", "category", "items"], rows)


def cmd_train(args: argparse.Namespace) -> tuple[BaseModel, str]:
    config = load_run_config(args.config, _overrides(args))
    artifacts = TrainingService(config.threads).train(config, args.out)
    rows = [["steps", artifacts.steps], ["initial loss", artifacts.initial_loss], ["final loss", artifacts.final_loss]]
    rows += [[f"metrics ({split})", path] for split, path in artifacts.metrics.items()]
    rows.append(["checkpoint", artifacts.checkpoint])
    return artifacts, format_table(["item", "value"], rows)


def cmd_eval(args: argparse.Namespace) -> tuple[BaseModel, str]:
    _, summary = EvaluationService(args.threads).evaluate(args.checkpoint, args.dataset, args.split, args.out)
    return summary, format_summary(summary)


def cmd_props(args: argparse.Namespace) -> tuple[BaseModel, str]:
    service = PropertyService(fault=args.fault, threads=args.threads)
    if args.list:
        report = PropertyReport(results=[])
        return report, "\n".join(service.suites)
    report = service.run(args.suite)
    return report, format_properties(report)


def cmd_bench(args: argparse.Namespace) -> tuple[BaseModel, str]:
    grid = parse_grid(args.grid) if args.grid else None
    report = BenchmarkService(args.threads).benchmark(grid, args.warmup, args.repeats, seed=args.seed or 0)
    return report, format_bench(report)


def cmd_ablate(args: argparse.Namespace) -> tuple[BaseModel, str]:
    config = load_run_config(args.config, _overrides(args))
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    report = AblationService(config.threads).ablate(config, args.study, seeds, args.out)
    return report, format_ablation(report)


def cmd_bootstrap(args: argparse.Namespace) -> tuple[BaseModel, str]:
    report = BootstrapService(args.threads).compare(args.csv_a, args.csv_b, args.n, args.ci, args.seed or 0)
    return report, format_bootstrap(report)


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "props": cmd_props,
    "bench": cmd_bench,
    "ablate": cmd_ablate,
    "bootstrap": cmd_bootstrap,
}


# ============================================================================
# Parser
# ============================================================================


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file")
    common.add_argument("--seed", type=int, help="Seed (non-negative)")
    common.add_argument("--out", type=Path, help="Output directory")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="Dotted config override (repeatable)")
    common.add_argument("--threads", type=int, help=f"Worker threads (default {settings.DEFAULT_THREADS})")
    common.add_argument("--json", action="store_true", help="Print the JSON report instead of the table")
    common.add_argument("--debug", action="store_true", help="Verbose logging")

    parser = argparse.ArgumentParser(prog="cea-kit", description="Continuous expert assembly toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", parents=[common], help="Generate a paired toy dataset")
    sub.add_parser("train", parents=[common], help="Train a restorer variant")

    p = sub.add_parser("eval", parents=[common], help="Score a checkpoint on a dataset split")
    p.add_argument("--checkpoint", type=Path, required=True, help="checkpoint.ceat of a training run")
    p.add_argument("--dataset", type=Path, required=True, help="Dataset directory")
    p.add_argument("--split", default=TEST_SPLIT, help="Split to evaluate")

    p = sub.add_parser("props", parents=[common], help="Run the invariant suites")
    p.add_argument("--suite", action="append", help="Suite to run (repeatable; default all)")
    p.add_argument("--fault", choices=FAULTS, help="Inject a fault (mutation check)")
    p.add_argument("--list", action="store_true", help="List suite names")

    p = sub.add_parser("bench", parents=[common], help="Time (XA)B against X(AB)")
    p.add_argument("--grid", help="Comma-separated NxD_INxD_OUTxR points")
    p.add_argument("--warmup", type=int, help=f"Warm-up iterations (default {settings.BENCH_WARMUP})")
    p.add_argument("--repeats", type=int, help=f"Timed iterations (default {settings.BENCH_REPEATS})")

    p = sub.add_parser("ablate", parents=[common], help="Train and compare the variants of a study")
    p.add_argument("--study", choices=sorted(STUDIES), required=True, help="Ablation study")
    p.add_argument("--seeds", help="Comma-separated training seeds (default: seed, seed+1, seed+2)")

    p = sub.add_parser("bootstrap", parents=[common], help="Paired bootstrap of two metric CSVs")
    p.add_argument("csv_a", type=Path, help="First metric CSV (differences are a - b)")
    p.add_argument("csv_b", type=Path, help="Second metric CSV")
    p.add_argument("--n", type=int, help=f"Resamples (default {settings.BOOTSTRAP_RESAMPLES})")
    p.add_argument("--ci", type=float, default=DEFAULT_CONFIDENCE, help="Confidence level")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(debug=args.debug or None)
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError(f"--seed must be non-negative, got {args.seed}")
        if args.threads is not None and args.threads < 1:
            raise ConfigError(f"--threads must be >= 1, got {args.threads}")
        report, table = COMMANDS[args.command](args)
        payload = report.model_dump_json(indent=2)
        report_dir = args.out if args.out is not None else settings.DEFAULT_OUTPUT_DIR
        report_dir.mkdir(parents=True, exist_ok=True)
        report_path = report_dir / f"{args.command}_report.json"
        report_path.write_text(payload + "\n", encoding="utf-8")
        logger.info(f"📝 Report written to {report_path}")
        print(payload if args.json else table)
        if isinstance(report, PropertyReport) and not report.passed:
            failed = [r.name for r in report.results if not r.passed]
            raise PropertyFailure(f"property suites failed: {failed}")
    except CeaError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return e.exit_code
    except Exception as e:
        logger.error(f"❌ Unexpected {type(e).__name__}: {e}", exc_info=True)
        return EXIT_INTERNAL_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
