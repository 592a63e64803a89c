"""On-disk synthetic datasets and T-frame clip sampling.

Layout::

    <root>/index.json          {"version": 1, "train": [ids], "val": [ids], "mse": {id: float}}
    <root>/<id>/ann.json       {"sequence_id", "height", "width",
                                "frames": [{"index", "file", "boxes": [[x1, y1, x2, y2], ...]}]}
    <root>/<id>/<t:04d>.pgm    binary 8-bit portable graymap (P5)
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import cv2
import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from config import SceneConfig
from errors import DataError
from synthdata import FrameSequence, generate

INDEX_VERSION = 1


class DatasetIndex(BaseModel):
    model_config = ConfigDict(extra="forbid")

    version: int = INDEX_VERSION
    train: List[str] = Field(default_factory=list)
    val: List[str] = Field(default_factory=list)
    mse: Dict[str, float] = Field(default_factory=dict)


def sequence_seeds(seed: int, count: int) -> List[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count)]


def generate_dataset(scene: SceneConfig, count: int, workers: int = 4) -> List[FrameSequence]:
    """``count`` sequences, each seeded independently from ``scene.seed``."""
    if count < 1:
        raise DataError("dataset needs at least one sequence")
    configs = [scene.model_copy(update={"seed": s}) for s in sequence_seeds(scene.seed, count)]
    ids = [f"seq_{i:04d}" for i in range(count)]
    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        jobs = pool.map(lambda args: generate(*args), zip(configs, ids))
        return list(tqdm(jobs, total=count, desc="generate", unit="seq", leave=False))


def write_pgm(path: Path, image: np.ndarray) -> None:
    if not cv2.imwrite(str(path), np.ascontiguousarray(image, dtype=np.uint8), [cv2.IMWRITE_PXM_BINARY, 1]):
        raise DataError(f"cannot write frame {path}")


def read_pgm(path: Path) -> np.ndarray:
    image = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if image is None:
        raise DataError(f"cannot read frame {path}")
    if image.ndim != 2 or image.dtype != np.uint8:
        raise DataError(f"{path} is not an 8-bit single-channel image")
    return image


def export_sequence(sequence: FrameSequence, root: Path) -> Path:
    folder = Path(root) / sequence.sequence_id
    try:
        folder.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create {folder}: {e}") from e
    frames = []
    for t in range(sequence.length):
        name = f"{t:04d}.pgm"
        write_pgm(folder / name, sequence.frames[t])
        frames.append({"index": t, "file": name, "boxes": sequence.boxes[t].tolist()})
    height, width = sequence.extent
    ann = {"sequence_id": sequence.sequence_id, "height": height, "width": width, "frames": frames}
    (folder / "ann.json").write_text(json.dumps(ann, indent=1) + "\n", encoding="utf-8")
    return folder


def export_dataset(sequences: Sequence[FrameSequence], root: Path, val_count: int) -> DatasetIndex:
    """Write every sequence; the last ``val_count`` sequences form the val split."""
    root = Path(root)
    if not 0 <= val_count <= len(sequences):
        raise DataError(f"val_count {val_count} out of range for {len(sequences)} sequences")
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create dataset directory {root}: {e}") from e
    for sequence in sequences:
        export_sequence(sequence, root)
    ids = [s.sequence_id for s in sequences]
    cut = len(ids) - val_count
    index = DatasetIndex(train=ids[:cut], val=ids[cut:], mse={s.sequence_id: s.mse() for s in sequences})
    write_index(index, root)
    for split, members in (("train", index.train), ("val", index.val)):
        if members:
            mean = float(np.mean([index.mse[i] for i in members]))
            logger.info(f"Split {split}: {len(members)} sequences, mean inter-frame MSE {mean:.2f}")
    return index


def write_index(index: DatasetIndex, root: Path) -> Path:
    path = Path(root) / "index.json"
    path.write_text(json.dumps(index.model_dump(), indent=1) + "\n", encoding="utf-8")
    return path


def read_index(root: Path) -> DatasetIndex:
    path = Path(root) / "index.json"
    if not path.exists():
        raise DataError(f"dataset index not found: {path}")
    index = DatasetIndex.model_validate_json(path.read_text(encoding="utf-8"))
    if index.version != INDEX_VERSION:
        raise DataError(f"unsupported dataset index version {index.version}")
    return index


def load_sequence(folder: Path) -> FrameSequence:
    folder = Path(folder)
    ann_path = folder / "ann.json"
    if not ann_path.exists():
        raise DataError(f"annotation file not found: {ann_path}")
    ann = json.loads(ann_path.read_text(encoding="utf-8"))
    frames, boxes = [], []
    for entry in sorted(ann["frames"], key=lambda e: e["index"]):
        frames.append(read_pgm(folder / entry["file"]))
        boxes.append(np.asarray(entry["boxes"], dtype=np.float64).reshape(-1, 4))
    if not frames:
        raise DataError(f"sequence {folder} has no frames")
    stacked = np.stack(frames)
    if stacked.shape[1:] != (ann["height"], ann["width"]):
        raise DataError(f"frames of {folder} are {stacked.shape[1:]}, annotation says {ann['height']}x{ann['width']}")
    return FrameSequence(ann.get("sequence_id", folder.name), stacked, boxes)


def load_split(root: Path, split: str) -> List[FrameSequence]:
    index = read_index(root)
    if split not in ("train", "val"):
        raise DataError(f"unknown split '{split}'")
    return [load_sequence(Path(root) / sid) for sid in getattr(index, split)]


def clip_at(frames: np.ndarray, keyframe: int, length: int) -> np.ndarray:
    """The ``length`` frames ending at ``keyframe``; left-padded with the first frame."""
    indices = np.clip(np.arange(keyframe - length + 1, keyframe + 1), 0, None)
    return frames[indices]


def to_input(clips: np.ndarray) -> np.ndarray:
    """uint8 (N, T, H, W) -> float (N, T, 1, H, W) in [0, 1]."""
    return (clips.astype(np.float64) / 255.0)[:, :, None]


@dataclass
class ClipBatch:
    frames: np.ndarray  # (N, T, 1, H, W) in [0, 1]
    boxes: List[np.ndarray]  # keyframe ground truth per item
    keys: List[Tuple[str, int]]  # (sequence id, keyframe index)


class ClipDataset:
    """Every annotated frame of every sequence, as a T-frame clip ending there (stride 1)."""

    def __init__(self, sequences: Sequence[FrameSequence], length: int):
        if not sequences:
            raise DataError("empty dataset")
        self.sequences = list(sequences)
        self.length = length
        self.items = [(i, t) for i, s in enumerate(self.sequences) for t in range(s.length)]

    @classmethod
    def from_directory(cls, root: Path, split: str, length: int) -> "ClipDataset":
        return cls(load_split(root, split), length)

    def __len__(self) -> int:
        return len(self.items)

    def batch(self, positions: Sequence[int]) -> ClipBatch:
        clips, boxes, keys = [], [], []
        for p in positions:
            i, t = self.items[p]
            seq = self.sequences[i]
            clips.append(clip_at(seq.frames, t, self.length))
            boxes.append(seq.boxes[t])
            keys.append((seq.sequence_id, t))
        return ClipBatch(to_input(np.stack(clips)), boxes, keys)

    def batches(self, batch_size: int, order: Optional[np.ndarray] = None) -> Iterator[ClipBatch]:
        order = np.arange(len(self)) if order is None else order
        for start in range(0, len(order), batch_size):
            yield self.batch(order[start : start + batch_size])
