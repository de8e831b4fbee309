"""Exception hierarchy.

Every error raised on purpose by cea-kit derives from ``CeaError`` so the CLI
can translate it into an exit code. Shape and configuration errors also derive
from ``ValueError`` so callers that only know about the builtin still work.
"""
from cea_kit.core.constants import (
    EXIT_CONFIG_ERROR,
    EXIT_NUMERIC_FAILURE,
    EXIT_PROPERTY_FAILURE,
)


class CeaError(Exception):
    """Base class for cea-kit errors."""

    exit_code: int = EXIT_CONFIG_ERROR


class DimensionError(CeaError, ValueError):
    """Operand shapes do not agree."""


class ConfigError(CeaError, ValueError):
    """Configuration is invalid or inconsistent."""


class EvaluationError(CeaError):
    """A function evaluated by the finite-difference oracle was not finite."""

    exit_code = EXIT_NUMERIC_FAILURE


class NumericError(CeaError):
    """A loss or tensor became non-finite."""

    exit_code = EXIT_NUMERIC_FAILURE

    def __init__(self, message: str, tensor_name: str | None = None):
        super().__init__(message)
        self.tensor_name = tensor_name


class PropertyFailure(CeaError):
    """At least one property suite failed."""

    exit_code = EXIT_PROPERTY_FAILURE
