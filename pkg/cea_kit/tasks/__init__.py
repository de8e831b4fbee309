"""Worker fan-out helpers."""
from cea_kit.tasks.runner import run_parallel

__all__ = ["run_parallel"]
