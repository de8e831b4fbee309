"""Dataset service: toy dataset generation."""
import logging
from pathlib import Path

from cea_kit.core.config import settings
from cea_kit.degradations.dataset import generate_dataset
from cea_kit.schemas.degradation import DatasetConfig, DatasetManifest
from cea_kit.services.base import BaseService

logger = logging.getLogger(__name__)


class DatasetService(BaseService):
    """Service for generating paired toy datasets."""

    def generate(self, config: DatasetConfig, seed: int, out_dir: Path | None = None) -> DatasetManifest:
        """Generate a dataset directory.

        Args:
            config: Size, family and split configuration
            seed: Global seed; every item derives its own stream from it
            out_dir: Target directory (defaults to ``settings.DEFAULT_OUTPUT_DIR / dataset-<seed>``)

        Returns:
            The manifest written to ``out_dir/manifest.json``
        """
        out_dir = Path(out_dir or settings.DEFAULT_OUTPUT_DIR / f"dataset-{seed}")
        logger.info(f"📦 Generating {config.n_items} {config.family.value} items ({config.image_size}px) into {out_dir}")
        return self._execute_with_error_handling(
            f"generating dataset in {out_dir}", generate_dataset, config, seed, out_dir, threads=self.threads
        )
