"""Checkpoint container.

A checkpoint is a numpy ``.npz`` archive. Keys:

- ``param/<path>`` and ``buffer/<path>``: model parameters and batch-norm
  running statistics, little-endian float arrays in their own shape
- ``momentum/<path>``: SGD momentum buffer of the parameter at ``<path>``
- ``meta/format_version``: int64 scalar, currently 1
- ``meta/step``, ``meta/epoch``: int64 scalars
- ``meta/best_map50``: float64 scalar
- ``meta/config``: the run configuration as UTF-8 YAML bytes (uint8 array)
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np
from loguru import logger

from errors import CheckpointError

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    state: Dict[str, np.ndarray]
    step: int = 0
    epoch: int = 0
    best_map50: float = 0.0
    config_yaml: str = ""
    format_version: int = FORMAT_VERSION


def _little_endian(array: np.ndarray) -> np.ndarray:
    array = np.asarray(array)
    return array.astype(array.dtype.newbyteorder("<"), copy=False)


def save_checkpoint(path: Path, checkpoint: Checkpoint) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {key: _little_endian(value) for key, value in checkpoint.state.items()}
    payload["meta/format_version"] = np.int64(FORMAT_VERSION)
    payload["meta/step"] = np.int64(checkpoint.step)
    payload["meta/epoch"] = np.int64(checkpoint.epoch)
    payload["meta/best_map50"] = np.float64(checkpoint.best_map50)
    payload["meta/config"] = np.frombuffer(checkpoint.config_yaml.encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as f:
        np.savez(f, **payload)
    logger.debug(f"Saved checkpoint {path} (step {checkpoint.step}, {len(checkpoint.state)} arrays)")
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as archive:
            data = {key: archive[key] for key in archive.files}
    except (OSError, ValueError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    version = int(data.pop("meta/format_version", -1))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version} in {path}")
    config_bytes = data.pop("meta/config", np.zeros(0, dtype=np.uint8))
    return Checkpoint(
        state={k: v for k, v in data.items() if not k.startswith("meta/")},
        step=int(data["meta/step"]),
        epoch=int(data["meta/epoch"]),
        best_map50=float(data["meta/best_map50"]),
        config_yaml=bytes(config_bytes).decode("utf-8"),
        format_version=version,
    )


def config_from_checkpoint(checkpoint: Checkpoint, fallback: Optional[str] = None) -> str:
    if checkpoint.config_yaml:
        return checkpoint.config_yaml
    if fallback is None:
        raise CheckpointError("checkpoint carries no configuration")
    return fallback
