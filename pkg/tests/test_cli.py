"""Tests for the cea-kit command line."""
import json
from pathlib import Path

import pytest

from cea_kit.cli import COMMANDS, format_table, main
from cea_kit.core.constants import EXIT_CONFIG_ERROR, EXIT_INTERNAL_ERROR, EXIT_OK, EXIT_PROPERTY_FAILURE
from cea_kit.degradations.dataset import MANIFEST_NAME
from cea_kit.services.evaluation_service import write_metrics_csv


@pytest.fixture(autouse=True)
def in_tmp_dir(tmp_path, monkeypatch):
    """Reports written without --out land under the per-test directory."""
    monkeypatch.chdir(tmp_path)


@pytest.fixture
def metric_csvs(tmp_path, metric_records):
    """Two metric CSVs where the first is 1 dB better on every image."""
    rows = [(str(i), 25.0 + 0.1 * i, 0.8, "H") for i in range(10)]
    better = metric_records([(i, p + 1.0, s, c) for i, p, s, c in rows])
    write_metrics_csv(better, tmp_path / "a.csv")
    write_metrics_csv(metric_records(rows), tmp_path / "b.csv")
    return tmp_path / "a.csv", tmp_path / "b.csv"


def test_format_table():
    """Columns are padded; floats use four decimals and infinities print as inf."""
    table = format_table(["name", "value"], [["a", 1.0], ["long", float("inf")]])
    lines = table.splitlines()
    assert lines[0].startswith("name")
    assert set(lines[1].replace(" ", "")) == {"-"}
    assert lines[2].endswith("1.0000")
    assert lines[3].endswith("inf")


def test_negative_seed_is_a_config_error():
    """Negative seeds exit with code 2."""
    assert main(["props", "--seed", "-1", "--list"]) == EXIT_CONFIG_ERROR


def test_zero_threads_is_a_config_error():
    """--threads 0 exits with code 2."""
    assert main(["props", "--threads", "0", "--list"]) == EXIT_CONFIG_ERROR


def test_unknown_command_exits_two():
    """Argparse usage errors exit with code 2."""
    with pytest.raises(SystemExit) as excinfo:
        main(["serve"])
    assert excinfo.value.code == 2


def test_props_list(capsys):
    """--list prints suite names and succeeds."""
    assert main(["props", "--list"]) == EXIT_OK
    out = capsys.readouterr().out.split()
    assert "tokenwise_matrix_equivalence" in out
    assert "bootstrap_determinism" in out


def test_props_fault_fails(capsys):
    """An injected fault makes the run exit with code 1."""
    code = main(["props", "--suite", "ranknorm_scale_invariance", "--fault", "skip_rank_norm"])
    assert code == EXIT_PROPERTY_FAILURE
    assert "FAIL" in capsys.readouterr().out


def test_props_single_suite_passes(capsys):
    """A clean suite run exits 0."""
    assert main(["props", "--suite", "ranknorm_unit_norm", "--suite", "psnr_monotone"]) == EXIT_OK
    assert capsys.readouterr().out.count("pass") == 2


def test_bootstrap_json_report(tmp_path, metric_csvs, capsys):
    """--json prints the report and --out writes it as bootstrap_report.json."""
    csv_a, csv_b = metric_csvs
    out = tmp_path / "report"
    code = main(["bootstrap", str(csv_a), str(csv_b), "--n", "200", "--json", "--out", str(out)])
    assert code == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    written = json.loads((out / "bootstrap_report.json").read_text())
    assert printed == written
    assert printed["pairs"] == 10
    assert printed["psnr"]["mean"] == pytest.approx(1.0)
    assert printed["psnr"]["p_boot_is_bound"] is True


def test_bootstrap_table(metric_csvs, capsys):
    """The default output is a table with a bounded p_boot label."""
    csv_a, csv_b = metric_csvs
    assert main(["bootstrap", str(csv_a), str(csv_b), "--n", "100"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "PSNR" in out and "< 1e-02" in out


def test_bootstrap_missing_csv(tmp_path, metric_csvs):
    """An unreadable CSV is a configuration error."""
    csv_a, _ = metric_csvs
    assert main(["bootstrap", str(csv_a), str(tmp_path / "missing.csv")]) == EXIT_CONFIG_ERROR


def test_bench_bad_grid():
    """A malformed grid exits with code 2."""
    assert main(["bench", "--grid", "64x8x8"]) == EXIT_CONFIG_ERROR


def test_bench_small_grid(capsys):
    """One grid point prints its MAC ratio."""
    assert main(["bench", "--grid", "256x64x64x8", "--warmup", "1", "--repeats", "2", "--json"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["points"][0]["mac_ratio"] == 4.0


def test_generate(tmp_path, capsys):
    """generate writes a manifest and prints per-category counts."""
    out = tmp_path / "data"
    code = main(["generate", "--seed", "1", "--out", str(out), "--set", "n_items=4", "--set", "image_size=16"])
    assert code == EXIT_OK
    assert (out / MANIFEST_NAME).is_file()
    assert (out / "generate_report.json").is_file()
    assert "category" in capsys.readouterr().out


def test_train_without_dataset_fails(tmp_path):
    """Training without a dataset path exits with code 2."""
    assert main(["train", "--out", str(tmp_path / "run")]) == EXIT_CONFIG_ERROR


def test_unknown_override_fails():
    """Unknown config keys exit with code 2."""
    assert main(["train", "--set", "cea.depth=3"]) == EXIT_CONFIG_ERROR


def test_report_written_without_out(capsys):
    """Without --out the JSON report goes to the default output directory next to the printed table."""
    assert main(["props", "--suite", "psnr_monotone"]) == EXIT_OK
    assert "psnr_monotone" in capsys.readouterr().out
    report = json.loads((Path("runs") / "props_report.json").read_text())
    assert [(r["name"], r["passed"]) for r in report["results"]] == [("psnr_monotone", True)]


def test_unexpected_error_exits_with_internal_code(monkeypatch):
    """Errors outside the toolkit hierarchy are logged and exit with code 4."""

    def broken(args):
        raise RuntimeError("boom")

    monkeypatch.setitem(COMMANDS, "props", broken)
    assert main(["props", "--list"]) == EXIT_INTERNAL_ERROR
