"""Base service class with common patterns."""
import logging
from collections.abc import Callable
from typing import Any

from pydantic import ValidationError

from cea_kit.core.config import settings
from cea_kit.core.errors import CeaError, ConfigError, NumericError

logger = logging.getLogger(__name__)


class BaseService:
    """Base service class with thread settings and error handling."""

    def __init__(self, threads: int | None = None):
        """Initialize service.

        Args:
            threads: Worker threads; defaults to ``settings.DEFAULT_THREADS``
        """
        self.threads = threads or settings.DEFAULT_THREADS

    def _handle_error(self, operation: str, error: Exception) -> CeaError:
        """Create a standardized error for a failed operation.

        Args:
            operation: Description of the operation that failed
            error: The original exception

        Returns:
            ConfigError for invalid input or IO failures, NumericError for
            floating-point failures
        """
        if isinstance(error, FloatingPointError):
            return NumericError(f"Numeric failure while {operation}: {str(error)}")
        return ConfigError(f"Error while {operation}: {str(error)}")

    def _execute_with_error_handling(self, operation: str, func: Callable[..., Any], *args: Any, **kwargs: Any) -> Any:
        """Execute a function with standardized error handling.

        Args:
            operation: Description of the operation (for error messages)
            func: Function to execute
            *args: Positional arguments for func
            **kwargs: Keyword arguments for func

        Returns:
            Result of func execution

        Raises:
            CeaError: Errors raised on purpose pass through unchanged; pydantic
                validation errors, IO errors and floating-point errors are wrapped
        """
        try:
            return func(*args, **kwargs)
        except CeaError:
            raise
        except (ValidationError, OSError, FloatingPointError) as e:
            logger.error(f"Failed while {operation}: {str(e)}", exc_info=True)
            raise self._handle_error(operation, e) from e
