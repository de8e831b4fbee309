"""Toy paired dataset on disk.

Layout::

    <root>/manifest.json
    <root>/clean/<id>.ceat
    <root>/degraded/<id>.ceat

Items are assigned categories round-robin from the configured family, so the
category mix is balanced. Every random choice of an item comes from a seed
derived from (global seed, item id), which makes items independent of one
another and of the number of worker threads.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cea_kit.autograd.serialization import load_tensor, save_tensor
from cea_kit.core.constants import AIO5_CATEGORIES, CDD11_CATEGORIES, TENSOR_FILE_SUFFIX
from cea_kit.core.errors import ConfigError
from cea_kit.degradations.compose import compose
from cea_kit.degradations.images import make_clean_image
from cea_kit.schemas.degradation import (
    CategoryFamily,
    DatasetConfig,
    DatasetManifest,
    DegradationSpec,
    DegradationStep,
    DegradationType,
    ManifestItem,
)
from cea_kit.tasks.runner import run_parallel

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
TRAIN_SPLIT = "train"
TEST_SPLIT = "test"


def item_seed(global_seed: int, item_id: str) -> int:
    """63-bit seed from SHA-256 of (global seed, item id)."""
    digest = hashlib.sha256(f"{global_seed}:{item_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def family_categories(family: CategoryFamily) -> tuple[str, ...]:
    return CDD11_CATEGORIES if family == CategoryFamily.CDD11 else AIO5_CATEGORIES


def sample_params(kind: DegradationType, rng: np.random.Generator) -> dict[str, float]:
    """Severity of one operator, drawn inside a moderate sub-range."""
    if kind == DegradationType.NOISE:
        return {"sigma": float(rng.choice([15.0, 25.0, 50.0]))}
    if kind == DegradationType.HAZE:
        return {"t0": float(rng.uniform(0.3, 0.6)), "airlight": float(rng.uniform(0.7, 1.0))}
    if kind == DegradationType.LOWLIGHT:
        return {"gamma": float(rng.uniform(1.5, 2.5)), "scale": float(rng.uniform(0.4, 0.7))}
    if kind == DegradationType.RAIN:
        return {
            "density": float(rng.uniform(0.005, 0.015)),
            "angle": float(rng.uniform(-20.0, 20.0)),
            "intensity": float(rng.uniform(0.5, 0.8)),
            "length": 8.0,
        }
    if kind == DegradationType.BLUR:
        return {"kernel_sigma": float(rng.uniform(0.8, 1.6))}
    return {
        "density": float(rng.uniform(0.003, 0.008)),
        "flake_size": float(rng.uniform(1.0, 2.5)),
        "opacity": float(rng.uniform(0.6, 0.9)),
    }


def sample_spec(
    category: str, seed: int, image_size: int, localized: bool = False
) -> DegradationSpec:
    """Chain for ``category`` (e.g. 'L+H+R') with per-step seeds derived from ``seed``."""
    rng = np.random.default_rng(seed)
    codes = category.split("+")
    step_seeds = np.random.SeedSequence(seed).generate_state(len(codes), dtype=np.uint64)
    chain = tuple(
        DegradationStep(type=DegradationType(code), params=sample_params(DegradationType(code), rng), seed=int(s >> 1))
        for code, s in zip(codes, step_seeds)
    )
    region = None
    if localized:
        side = int(rng.integers(image_size // 4, image_size // 2 + 1))
        y0, x0 = (int(v) for v in rng.integers(0, image_size - side + 1, size=2))
        region = (y0, x0, y0 + side, x0 + side)
    return DegradationSpec(chain=chain, seed=seed, region=region)


@dataclass(frozen=True)
class _GeneratedItem:
    item: ManifestItem
    clean: np.ndarray
    degraded: np.ndarray


def _generate_item(index: int, config: DatasetConfig, seed: int) -> _GeneratedItem:
    categories = family_categories(config.family)
    item_id = f"{index:05d}"
    s = item_seed(seed, item_id)
    rng = np.random.default_rng(s)
    clean = make_clean_image(config.image_size, rng)
    localized = bool(rng.random() < config.localized_fraction)
    spec = sample_spec(categories[index % len(categories)], s, config.image_size, localized=localized)
    n_test = int(round(config.test_fraction * config.n_items))
    split = TEST_SPLIT if index >= config.n_items - n_test else TRAIN_SPLIT
    return _GeneratedItem(item=ManifestItem.from_spec(item_id, split, spec), clean=clean, degraded=compose(spec, clean))


def generate_dataset(config: DatasetConfig, seed: int, out_dir: Path, threads: int = 1) -> DatasetManifest:
    """Generate items (optionally in parallel) and write them from this thread in id order."""
    out_dir = Path(out_dir)
    try:
        (out_dir / "clean").mkdir(parents=True, exist_ok=True)
        (out_dir / "degraded").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create dataset directory {out_dir}: {e}") from e

    generated = run_parallel(
        lambda i: _generate_item(i, config, seed),
        range(config.n_items),
        threads=threads,
        context={"operation": "generate_dataset", "items": config.n_items, "seed": seed},
    )
    for g in generated:
        save_tensor(out_dir / "clean" / f"{g.item.id}{TENSOR_FILE_SUFFIX}", g.clean)
        save_tensor(out_dir / "degraded" / f"{g.item.id}{TENSOR_FILE_SUFFIX}", g.degraded)

    manifest = DatasetManifest(seed=seed, config=config, items=[g.item for g in generated])
    (out_dir / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(f"✅ Generated {config.n_items} items ({config.family.value}) in {out_dir}")
    return manifest


class ToyDataset:
    """Read access to a generated dataset directory."""

    def __init__(self, root: Path):
        self.root = Path(root)
        manifest_path = self.root / MANIFEST_NAME
        if not manifest_path.is_file():
            raise ConfigError(f"no {MANIFEST_NAME} in {self.root}")
        self.manifest = DatasetManifest.model_validate_json(manifest_path.read_text(encoding="utf-8"))

    def __len__(self) -> int:
        return len(self.manifest.items)

    def split(self, name: str) -> list[ManifestItem]:
        items = self.manifest.split(name)
        if not items and name not in (TRAIN_SPLIT, TEST_SPLIT):
            raise ConfigError(f"unknown split {name!r}")
        return items

    def load_pair(self, item: ManifestItem) -> tuple[np.ndarray, np.ndarray]:
        """(clean, degraded) arrays of one item."""
        clean = load_tensor(self.root / "clean" / f"{item.id}{TENSOR_FILE_SUFFIX}")
        degraded = load_tensor(self.root / "degraded" / f"{item.id}{TENSOR_FILE_SUFFIX}")
        return clean, degraded

    def sha256(self) -> str:
        return dataset_sha256(self.root)


def dataset_sha256(root: Path) -> str:
    """Hash of the manifest and every tensor file, in sorted path order."""
    root = Path(root)
    digest = hashlib.sha256()
    files = [root / MANIFEST_NAME] + sorted((root / "clean").glob(f"*{TENSOR_FILE_SUFFIX}")) + sorted(
        (root / "degraded").glob(f"*{TENSOR_FILE_SUFFIX}")
    )
    for path in files:
        digest.update(str(path.relative_to(root)).encode("utf-8"))
        digest.update(path.read_bytes())
    return digest.hexdigest()
