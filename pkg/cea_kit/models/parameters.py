"""Named parameter store (the restorer state).

Every parameter is initialized from its own random stream, derived from the
run seed and the parameter name. Two configurations that share a parameter
name therefore start from identical values for it, whatever else they add.
"""
from __future__ import annotations

import hashlib
import logging
from collections.abc import Iterator
from pathlib import Path

import numpy as np

from cea_kit.autograd.serialization import load_container, save_container
from cea_kit.autograd.tensor import Tensor
from cea_kit.core.errors import ConfigError, DimensionError

logger = logging.getLogger(__name__)


def derive_seed(seed: int, key: str) -> np.random.SeedSequence:
    """Seed sequence for ``key`` under the global ``seed``."""
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.SeedSequence([seed, *words])


def rng_for(seed: int, key: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, key))


class ParameterStore:
    """Flat-named learnable tensors in creation order."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._params: dict[str, Tensor] = {}
        self.requested: set[str] = set()

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], seed: int = 0) -> "ParameterStore":
        store = cls(seed)
        for name, array in arrays.items():
            store._params[name] = Tensor(array, requires_grad=True, name=name)
        return store

    @classmethod
    def from_file(cls, path: Path, seed: int = 0) -> "ParameterStore":
        return cls.from_arrays(load_container(path), seed=seed)

    # ------------------------------------------------------------------
    # Creation
    # ------------------------------------------------------------------
    def _existing(self, name: str, shape: tuple[int, ...]) -> Tensor | None:
        """Parameter already present (e.g. loaded from a checkpoint), shape-checked."""
        self.requested.add(name)
        tensor = self._params.get(name)
        if tensor is not None and tensor.shape != tuple(shape):
            raise DimensionError(f"{name}: stored shape {tensor.shape} != expected shape {tuple(shape)}")
        return tensor

    def _add(self, name: str, data: np.ndarray) -> Tensor:
        tensor = Tensor(data, requires_grad=True, name=name)
        self._params[name] = tensor
        return tensor

    def uniform(self, name: str, shape: tuple[int, ...], fan_in: int, scale: float = 1.0) -> Tensor:
        """Centered uniform init with bound ``scale / sqrt(fan_in)``."""
        existing = self._existing(name, shape)
        if existing is not None:
            return existing
        bound = scale / np.sqrt(fan_in)
        return self._add(name, rng_for(self.seed, name).uniform(-bound, bound, size=shape))

    def zeros(self, name: str, shape: tuple[int, ...]) -> Tensor:
        existing = self._existing(name, shape)
        if existing is not None:
            return existing
        return self._add(name, np.zeros(shape))

    def ones(self, name: str, shape: tuple[int, ...]) -> Tensor:
        existing = self._existing(name, shape)
        if existing is not None:
            return existing
        return self._add(name, np.ones(shape))

    # ------------------------------------------------------------------
    # Access
    # ------------------------------------------------------------------
    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError as e:
            raise ConfigError(f"unknown parameter {name!r}") from e

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self._params if n.startswith(prefix)]

    def tensors(self, prefix: str = "") -> list[Tensor]:
        return [t for n, t in self._params.items() if n.startswith(prefix)]

    def count(self, prefix: str = "") -> int:
        return sum(t.size for t in self.tensors(prefix))

    def set(self, name: str, data: np.ndarray) -> None:
        self[name].assign(data)

    # ------------------------------------------------------------------
    # Checkpointing
    # ------------------------------------------------------------------
    def to_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self._params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray], strict: bool = True) -> None:
        missing = set(self._params) - set(arrays)
        unexpected = set(arrays) - set(self._params)
        if strict and (missing or unexpected):
            raise ConfigError(
                f"checkpoint does not match the model: missing {sorted(missing)}, unexpected {sorted(unexpected)}"
            )
        for name, array in arrays.items():
            if name not in self._params:
                continue
            if array.shape != self._params[name].shape:
                raise DimensionError(f"{name}: checkpoint shape {array.shape} != parameter shape {self._params[name].shape}")
            self._params[name].assign(array)

    def save(self, path: Path) -> None:
        save_container(path, self.to_arrays())
        logger.debug(f"Saved {len(self)} parameters ({self.count()} values) to {path}")

    def load(self, path: Path, strict: bool = True) -> None:
        self.load_arrays(load_container(path), strict=strict)
