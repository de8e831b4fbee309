"""Tests for settings, run config files and dotted overrides."""
import json

import pytest

from cea_kit.core.config import Settings, apply_overrides, load_dataset_config, load_run_config, parse_override
from cea_kit.core.constants import EXIT_CONFIG_ERROR, EXIT_NUMERIC_FAILURE, EXIT_PROPERTY_FAILURE
from cea_kit.core.errors import CeaError, ConfigError, DimensionError, NumericError, PropertyFailure
from cea_kit.schemas.cea import RoutingRule, Target
from cea_kit.schemas.run import RunConfig


def test_defaults():
    """With no file and no overrides the defaults validate."""
    config = load_run_config()
    assert config == RunConfig()
    assert config.backbone.cea.rank == 8
    assert config.backbone.cea.injection_targets == (Target.Q, Target.K)
    assert config.loss.lambda_f == 0.10


def test_parse_override_values():
    """Values parse as JSON with a string fallback."""
    assert parse_override("seed=3") == (["seed"], 3)
    assert parse_override("backbone.cea.rank_norm=false") == (["backbone", "cea", "rank_norm"], False)
    assert parse_override("cea.routing_rule=topk_softmax") == (["cea", "routing_rule"], "topk_softmax")
    with pytest.raises(ConfigError):
        parse_override("seed")
    with pytest.raises(ConfigError):
        parse_override("=3")


def test_backbone_prefix_is_optional():
    """cea.rank=16 is shorthand for backbone.cea.rank=16."""
    config = load_run_config(overrides=["cea.rank=16", "embed_dim=8", "optimizer.lr=0.001"])
    assert config.backbone.cea.rank == 16
    assert config.backbone.embed_dim == 8
    assert config.optimizer.lr == 0.001


def test_targets_from_string():
    """Injection targets accept 'Q+K+V' and 'none'."""
    assert load_run_config(overrides=["cea.injection_targets=K+Q"]).backbone.cea.injection_targets == (Target.Q, Target.K)
    assert load_run_config(overrides=["cea.injection_targets=none"]).backbone.cea.injection_targets == ()


def test_file_then_overrides(tmp_path):
    """Overrides apply on top of the file."""
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"seed": 5, "backbone": {"cea": {"rank": 4}}}))
    config = load_run_config(path, ["cea.routing_rule=topk_softmax", "cea.top_k=2"])
    assert config.seed == 5
    assert config.backbone.cea.rank == 4
    assert config.backbone.cea.routing_rule == RoutingRule.TOPK_SOFTMAX


@pytest.mark.parametrize(
    "overrides",
    [["cea.rank=0"], ["seed=-1"], ["unknown=1"], ["cea.routing_rule=topk_softmax", "cea.top_k=9"], ["threads=0"]],
)
def test_invalid_values_raise_config_error(overrides):
    """Validation failures surface as ConfigError."""
    with pytest.raises(ConfigError):
        load_run_config(overrides=overrides)


def test_unreadable_or_malformed_files(tmp_path):
    """Missing files, bad JSON and non-objects are configuration errors."""
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_run_config(bad)
    listing = tmp_path / "list.json"
    listing.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_run_config(listing)


def test_override_into_scalar_rejected():
    """A scalar cannot be treated as a section."""
    with pytest.raises(ConfigError):
        apply_overrides({"seed": 1}, ["seed.value=2"])


def test_dataset_config_overrides():
    """Dataset configs take dotted overrides without the backbone shorthand."""
    config = load_dataset_config(overrides=["n_items=4", "family=aio5"])
    assert config.n_items == 4
    assert config.family.value == "aio5"


def test_settings_from_environment(monkeypatch):
    """CEA_* variables are read with inline comments stripped."""
    monkeypatch.setenv("CEA_BENCH_REPEATS", "50  # quick run")
    monkeypatch.setenv("CEA_DEBUG", "yes")
    monkeypatch.setenv("CEA_LOG_LEVEL", "warning")
    settings = Settings()
    assert settings.BENCH_REPEATS == 50
    assert settings.DEBUG is True
    assert settings.LOG_LEVEL == "WARNING"


def test_settings_fall_back_on_bad_values(monkeypatch):
    """Unparsable integers and unknown log levels use the defaults."""
    monkeypatch.setenv("CEA_BOOTSTRAP_SHARD_SIZE", "lots")
    monkeypatch.setenv("CEA_LOG_LEVEL", "chatty")
    settings = Settings()
    assert settings.BOOTSTRAP_SHARD_SIZE == 1000
    assert settings.LOG_LEVEL == "INFO"
    assert settings.describe()["PROJECT_NAME"] == "cea-kit"


def test_exit_codes():
    """Errors carry the CLI exit code of their class."""
    assert ConfigError("x").exit_code == EXIT_CONFIG_ERROR
    assert DimensionError("x").exit_code == EXIT_CONFIG_ERROR
    assert NumericError("x", tensor_name="loss").exit_code == EXIT_NUMERIC_FAILURE
    assert PropertyFailure("x").exit_code == EXIT_PROPERTY_FAILURE
    assert isinstance(ConfigError("x"), (CeaError, ValueError))
