"""Pytest configuration and fixtures."""
import numpy as np
import pytest

from cea_kit.degradations.dataset import generate_dataset
from cea_kit.schemas.backbone import BackboneConfig
from cea_kit.schemas.cea import CeaConfig
from cea_kit.schemas.degradation import DatasetConfig
from cea_kit.schemas.objectives import MetricRecord
from cea_kit.schemas.run import OptimizerConfig, RunConfig

TINY_IMAGE_SIZE = 16


def tiny_backbone_config(cea: CeaConfig | None = None) -> BackboneConfig:
    """C=8, one block per stage, two resolution levels."""
    return BackboneConfig(
        embed_dim=8,
        encoder_blocks=(1, 1),
        latent_blocks=1,
        decoder_blocks=(1, 1),
        refinement_blocks=1,
        heads=(1, 2, 2),
        cea=cea or CeaConfig(rank=4),
    )


@pytest.fixture
def rng():
    """Seeded numpy generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_backbone():
    """Tiny restorer geometry with default cross-attention CEA on Q+K."""
    return tiny_backbone_config()


@pytest.fixture
def dataset_config():
    """Twelve 16x16 CDD-11 items, three of them in the test split."""
    return DatasetConfig(n_items=12, image_size=TINY_IMAGE_SIZE, test_fraction=0.25)


@pytest.fixture
def tiny_dataset(tmp_path, dataset_config):
    """Generated toy dataset directory."""
    root = tmp_path / "dataset"
    generate_dataset(dataset_config, seed=7, out_dir=root)
    return root


@pytest.fixture
def tiny_run_config(tiny_dataset, tiny_backbone):
    """A few optimizer steps on the tiny dataset."""
    return RunConfig(
        backbone=tiny_backbone,
        optimizer=OptimizerConfig(epochs=1, batch_size=3, max_steps=3, lr=1e-3),
        dataset=tiny_dataset,
        seed=0,
    )


@pytest.fixture
def metric_records():
    """Factory for MetricRecord lists from (id, psnr, ssim, category) tuples."""

    def make(rows):
        return [MetricRecord(image_id=i, psnr_db=p, ssim=s, category=c) for i, p, s, c in rows]

    return make
