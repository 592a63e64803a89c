"""Checkpoint loading, per-frame detection over a sequence, JSON-lines output and box overlays."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

import cv2
import numpy as np
from loguru import logger

from checkpoint import config_from_checkpoint, load_checkpoint
from config import PipelineConfig
from dataset import ClipDataset, load_sequence
from detection import DetectionSet
from engine.tensor import precision
from errors import DataError
from model.hypertea import HyperTea
from trainer import predict_batch

OVERLAY_COLOR = (0, 0, 255)  # BGR
GT_COLOR = (0, 255, 0)


def load_model(path: Path, fallback: Optional[PipelineConfig] = None) -> Tuple[HyperTea, PipelineConfig]:
    ckpt = load_checkpoint(path)
    config = PipelineConfig.from_yaml(config_from_checkpoint(ckpt, fallback.to_yaml() if fallback else None))
    with precision(config.precision):
        model = HyperTea.from_config(config)
    model.load_state_dict(ckpt.state)
    model.eval()
    logger.info(f"Loaded {path} (step {ckpt.step}, best mAP50 {ckpt.best_map50:.4f})")
    return model, config


def detect_sequence(model: HyperTea, config: PipelineConfig, folder: Path, batch_size: int = 8) -> List[Tuple[str, int, DetectionSet]]:
    data = ClipDataset([load_sequence(folder)], config.frames)
    out = []
    with precision(config.precision):
        for batch in data.batches(batch_size):
            for dets, (sid, t) in zip(predict_batch(model, batch, config), batch.keys):
                out.append((sid, t, dets))
    return out


def write_detections(records: List[Tuple[str, int, DetectionSet]], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for sid, t, dets in records:
            f.write(json.dumps(dets.to_record(sid, t)) + "\n")
    return path


def read_detections(path: Path) -> Iterator[Tuple[str, int, DetectionSet]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"detections file not found: {path}")
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                yield record["sequence_id"], int(record["frame"]), DetectionSet.from_record(record)
            except (KeyError, ValueError) as e:
                raise DataError(f"{path}:{n}: malformed detection record ({e})") from e


def detections_by_key(path: Path) -> Dict[Tuple[str, int], DetectionSet]:
    return {(sid, t): dets for sid, t, dets in read_detections(path)}


def draw_overlay(frame: np.ndarray, dets: DetectionSet, gts: Optional[np.ndarray] = None) -> np.ndarray:
    """Gray frame -> BGR image with detections (red) and optional ground truth (green)."""
    image = cv2.cvtColor(frame, cv2.COLOR_GRAY2BGR)
    for boxes, color in ((gts, GT_COLOR), (dets.boxes, OVERLAY_COLOR)):
        if boxes is None:
            continue
        for x1, y1, x2, y2 in np.asarray(boxes).reshape(-1, 4):
            cv2.rectangle(image, (int(round(x1)), int(round(y1))), (int(round(x2)), int(round(y2))), color, 1)
    return image


def write_overlays(folder: Path, records: List[Tuple[str, int, DetectionSet]], out_dir: Path) -> int:
    sequence = load_sequence(folder)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for _, t, dets in records:
        image = draw_overlay(sequence.frames[t], dets, sequence.boxes[t])
        path = out_dir / f"{t:04d}.ppm"
        if not cv2.imwrite(str(path), image, [cv2.IMWRITE_PXM_BINARY, 1]):
            raise DataError(f"cannot write overlay {path}")
    return len(records)
