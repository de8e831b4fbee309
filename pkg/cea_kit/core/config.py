"""Application configuration settings.

HOW IT WORKS:
============
1. Values are read from environment variables prefixed with ``CEA_``
2. A ``.env`` file in the working directory is read as well (if it exists)
3. Missing values fall back to the defaults below
4. Experiment settings (rank, backbone geometry, optimizer...) are NOT here:
   they belong to the per-run JSON config (see ``cea_kit.schemas.run``)

EXAMPLES:
- CEA_DEBUG=true          verbose logging
- CEA_DEFAULT_THREADS=4   fan evaluation/dataset generation out to 4 workers
- CEA_BENCH_REPEATS=1000  long timing run
"""
import json
import logging
from pathlib import Path
from typing import Any, TypeVar

from pydantic import BaseModel, Field, ValidationError, ValidationInfo, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from cea_kit import __version__
from cea_kit.core.constants import DEFAULT_BOOTSTRAP_RESAMPLES
from cea_kit.core.errors import ConfigError
from cea_kit.schemas.backbone import BackboneConfig
from cea_kit.schemas.degradation import DatasetConfig
from cea_kit.schemas.run import RunConfig

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

ConfigT = TypeVar("ConfigT", bound=BaseModel)


def strip_comment(value: Any) -> str:
    """Strip inline comments from env value (everything after #)."""
    if not isinstance(value, str):
        return str(value)
    if "#" in value:
        value = value.split("#")[0]
    return value.strip()


class Settings(BaseSettings):
    """Process-wide settings loaded from environment variables."""

    # ============================================================================
    # Application Metadata
    # ============================================================================
    PROJECT_NAME: str = "cea-kit"
    VERSION: str = __version__

    # ============================================================================
    # Logging
    # ============================================================================
    DEBUG: bool = Field(default=False, description="Enable debug logging for the cea_kit package")
    LOG_LEVEL: str = Field(default="INFO", description="Root log level (DEBUG, INFO, WARNING, ...)")

    # ============================================================================
    # Execution
    # ============================================================================
    DEFAULT_THREADS: int = Field(
        default=1, ge=1, description="Worker threads for per-item work (results do not depend on it)"
    )
    DEFAULT_OUTPUT_DIR: Path = Field(default=Path("runs"), description="Directory for run artifacts when --out is omitted")

    # ============================================================================
    # Benchmark Protocol
    # ============================================================================
    BENCH_WARMUP: int = Field(default=10, ge=0, description="Untimed warm-up iterations per grid point")
    BENCH_REPEATS: int = Field(default=100, ge=1, description="Timed iterations per grid point (median reported)")

    # ============================================================================
    # Bootstrap
    # ============================================================================
    BOOTSTRAP_RESAMPLES: int = Field(
        default=DEFAULT_BOOTSTRAP_RESAMPLES, ge=1, description="Paired bootstrap resamples"
    )
    BOOTSTRAP_SHARD_SIZE: int = Field(
        default=1000, ge=1, description="Resamples per RNG shard (fixed so results do not depend on thread count)"
    )

    # ============================================================================
    # Pydantic Configuration
    # ============================================================================
    model_config = SettingsConfigDict(
        env_prefix="CEA_",
        env_file=".env",
        case_sensitive=True,
        extra="ignore",
    )

    # ============================================================================
    # Validators
    # ============================================================================
    @field_validator("PROJECT_NAME", "VERSION", "LOG_LEVEL", mode="before")
    @classmethod
    def strip_comments(cls, v: Any) -> str:
        """Strip inline comments from string values."""
        return strip_comment(v)

    @field_validator("DEBUG", mode="before")
    @classmethod
    def parse_bool(cls, v: Any) -> bool:
        """Parse boolean values, stripping comments and converting string to bool."""
        if isinstance(v, bool):
            return v
        v_str = strip_comment(str(v)).lower()
        return v_str in ("true", "1", "yes", "on")

    @field_validator(
        "DEFAULT_THREADS", "BENCH_WARMUP", "BENCH_REPEATS", "BOOTSTRAP_RESAMPLES", "BOOTSTRAP_SHARD_SIZE",
        mode="before",
    )
    @classmethod
    def parse_int(cls, v: Any, info: ValidationInfo) -> Any:
        """Parse integers, stripping comments; unparsable values fall back to the field default."""
        if isinstance(v, int):
            return v
        v_str = strip_comment(str(v))
        try:
            return int(v_str)
        except (ValueError, TypeError):
            default = cls.model_fields[info.field_name].default
            logger.warning(f"⚠️  Configuration: {info.field_name}={v!r} is not an integer, using {default}")
            return default

    @model_validator(mode="after")
    def normalize_log_level(self) -> "Settings":
        """Upper-case the log level and fall back to INFO for unknown names."""
        level = self.LOG_LEVEL.upper()
        level_names = logging.getLevelNamesMapping() if hasattr(logging, "getLevelNamesMapping") else logging._nameToLevel
        if level not in level_names:
            logger.warning(f"⚠️  Configuration: unknown LOG_LEVEL {self.LOG_LEVEL!r}, using INFO")
            level = "INFO"
        self.LOG_LEVEL = level
        return self

    def describe(self) -> dict[str, Any]:
        """JSON-safe view of the settings, recorded in every run directory."""
        return json.loads(self.model_dump_json())


def configure_logging(debug: bool | None = None, level: str | None = None) -> None:
    """Configure stdlib logging for the CLI."""
    debug = settings.DEBUG if debug is None else debug
    level_name = (level or settings.LOG_LEVEL).upper()
    logging.basicConfig(
        level=logging.DEBUG if debug else getattr(logging, level_name, logging.INFO),
        format=LOG_FORMAT,
        datefmt=LOG_DATE_FORMAT,
        force=True,
    )
    if debug:
        logging.getLogger("cea_kit").setLevel(logging.DEBUG)
        logger.info("🐛 Debug mode enabled - verbose logging active")


# Create settings instance (reads from environment automatically)
settings = Settings()


# ============================================================================
# Run configuration files
# ============================================================================


def parse_override(override: str) -> tuple[list[str], Any]:
    """Split ``dotted.key=value``; the value is parsed as JSON and falls back to a string."""
    if "=" not in override:
        raise ConfigError(f"override {override!r} is not of the form dotted.key=value")
    key, raw = override.split("=", 1)
    path = [part for part in key.strip().split(".") if part]
    if not path:
        raise ConfigError(f"override {override!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw.strip()
    return path, value


def apply_overrides(
    data: dict[str, Any], overrides: list[str], model: type[BaseModel] = RunConfig
) -> dict[str, Any]:
    """Set every dotted path in ``data``.

    For run configs, keys of the backbone may omit the ``backbone.`` prefix
    (``cea.rank=16`` is ``backbone.cea.rank=16``).
    """
    for override in overrides:
        path, value = parse_override(override)
        if model is RunConfig and path[0] not in RunConfig.model_fields and path[0] in BackboneConfig.model_fields:
            path = ["backbone", *path]
        node = data
        for part in path[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"override {override!r}: {part!r} is not a section")
            node = child
        node[path[-1]] = value
    return data


def load_config(model: type[ConfigT], path: Path | None = None, overrides: list[str] | None = None) -> ConfigT:
    """Read a JSON config (or start from defaults), apply dotted overrides and validate."""
    data: dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must contain a JSON object")
    data = apply_overrides(data, overrides or [], model)
    try:
        return model.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid {model.__name__}: {e}") from e


def load_run_config(path: Path | None = None, overrides: list[str] | None = None) -> RunConfig:
    return load_config(RunConfig, path, overrides)


def load_dataset_config(path: Path | None = None, overrides: list[str] | None = None) -> DatasetConfig:
    return load_config(DatasetConfig, path, overrides)
