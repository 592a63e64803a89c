"""Box coding, target assignment, the composite detection loss, decoding and NMS.

Boxes are (x1, y1, x2, y2) in pixels. A cell at (row, col) with stride s
encodes a box as

    cx = (col + sigmoid(tx)) * s    w = exp(tw) * s
    cy = (row + sigmoid(ty)) * s    h = exp(th) * s
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.special import expit, log_expit, logit

from config import LossWeights
from engine import functional as F
from engine.tensor import Tensor, exp, maximum, minimum, sigmoid
from errors import DataError, ShapeError
from model.head import RawPrediction

CENTER_EPS = 1e-9
LOG_SCALE_CLIP = 20.0


@dataclass
class DetectionSet:
    boxes: np.ndarray  # (K, 4)
    scores: np.ndarray  # (K,)

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if len(self.boxes) != len(self.scores):
            raise ShapeError(f"{len(self.boxes)} boxes but {len(self.scores)} scores")

    def __len__(self) -> int:
        return len(self.scores)

    @classmethod
    def empty(cls) -> "DetectionSet":
        return cls(np.zeros((0, 4)), np.zeros(0))

    def sorted(self) -> "DetectionSet":
        order = np.argsort(-self.scores, kind="stable")
        return DetectionSet(self.boxes[order], self.scores[order])

    def to_record(self, sequence_id: str, frame: int) -> Dict:
        return {
            "sequence_id": sequence_id,
            "frame": int(frame),
            "boxes": [[float(v) for v in box] for box in self.boxes],
            "scores": [float(s) for s in self.scores],
        }

    @classmethod
    def from_record(cls, record: Dict) -> "DetectionSet":
        return cls(np.asarray(record.get("boxes", []), dtype=np.float64), record.get("scores", []))


def box_area(boxes: np.ndarray) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=np.float64)
    return np.clip(boxes[..., 2] - boxes[..., 0], 0, None) * np.clip(boxes[..., 3] - boxes[..., 1], 0, None)


def box_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of (K, 4) and (M, 4) boxes -> (K, M)."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0, None)
    inter = wh[..., 0] * wh[..., 1]
    union = box_area(a)[:, None] + box_area(b)[None, :] - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def iou(a: Sequence[float], b: Sequence[float]) -> float:
    return float(box_iou(a, b)[0, 0])


def center_cell(box: np.ndarray, grid: Tuple[int, int], stride: int) -> Tuple[int, int]:
    cx = (box[0] + box[2]) / 2.0
    cy = (box[1] + box[3]) / 2.0
    row = int(np.clip(np.floor(cy / stride), 0, grid[0] - 1))
    col = int(np.clip(np.floor(cx / stride), 0, grid[1] - 1))
    return row, col


def encode_box(box: Sequence[float], cell: Tuple[int, int], stride: int) -> np.ndarray:
    """Pixel box -> (tx, ty, tw, th) relative to ``cell``."""
    x1, y1, x2, y2 = (float(v) for v in box)
    row, col = cell
    ox = np.clip((x1 + x2) / 2.0 / stride - col, CENTER_EPS, 1 - CENTER_EPS)
    oy = np.clip((y1 + y2) / 2.0 / stride - row, CENTER_EPS, 1 - CENTER_EPS)
    return np.array([logit(ox), logit(oy), np.log((x2 - x1) / stride), np.log((y2 - y1) / stride)])


def decode_grid(regression: np.ndarray, stride: int) -> np.ndarray:
    """(4, H, W) regression -> (H, W, 4) pixel boxes."""
    _, h, w = regression.shape
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    cx = (cols + expit(regression[0])) * stride
    cy = (rows + expit(regression[1])) * stride
    bw = np.exp(np.clip(regression[2], -LOG_SCALE_CLIP, LOG_SCALE_CLIP)) * stride
    bh = np.exp(np.clip(regression[3], -LOG_SCALE_CLIP, LOG_SCALE_CLIP)) * stride
    return np.stack([cx - bw / 2, cy - bh / 2, cx + bw / 2, cy + bh / 2], axis=-1)


@dataclass
class CellTargets:
    positive: np.ndarray  # (H, W) bool
    boxes: np.ndarray  # (H, W, 4) gt box of each positive cell


@dataclass
class Targets:
    objectness: np.ndarray  # (N, 1, H, W) 0/1
    positive: np.ndarray  # (N, H, W) bool
    boxes: np.ndarray  # (N, H, W, 4)

    @property
    def num_positive(self) -> int:
        return int(self.positive.sum())


def assign_targets(gt_boxes: np.ndarray, grid: Tuple[int, int], stride: int) -> CellTargets:
    """Mark the cell containing each box center positive; larger boxes win shared cells."""
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    positive = np.zeros(grid, dtype=bool)
    boxes = np.zeros(grid + (4,), dtype=np.float64)
    if len(gt_boxes) == 0:
        return CellTargets(positive, boxes)
    areas = box_area(gt_boxes)
    if np.any(areas <= 0):
        raise DataError(f"degenerate ground-truth box: {gt_boxes[np.argmin(areas)].tolist()}")
    for k in np.argsort(-areas, kind="stable"):
        row, col = center_cell(gt_boxes[k], grid, stride)
        if positive[row, col]:
            continue
        positive[row, col] = True
        boxes[row, col] = gt_boxes[k]
    return CellTargets(positive, boxes)


def assign_batch(gt_boxes: Sequence[np.ndarray], grid: Tuple[int, int], stride: int) -> Targets:
    cells = [assign_targets(b, grid, stride) for b in gt_boxes]
    positive = np.stack([c.positive for c in cells])
    boxes = np.stack([c.boxes for c in cells])
    return Targets(positive[:, None].astype(np.float64), positive, boxes)


@dataclass
class LossComponents:
    total: Tensor
    reg: Tensor
    cls: Tensor
    obj: Tensor

    def as_floats(self) -> Dict[str, float]:
        return {"loss": self.total.item(), "reg": self.reg.item(), "cls": self.cls.item(), "obj": self.obj.item()}


def decoded_positive_boxes(
    pred: RawPrediction, batch: np.ndarray, rows: np.ndarray, cols: np.ndarray
) -> Tuple[Tensor, Tensor, Tensor, Tensor]:
    """Differentiable x1, y1, x2, y2 (each of length P) at the given cells."""
    s = pred.stride
    t = pred.regression.transpose(0, 2, 3, 1)[(batch, rows, cols)]
    cx = (sigmoid(t[:, 0]) + cols.astype(np.float64)) * s
    cy = (sigmoid(t[:, 1]) + rows.astype(np.float64)) * s
    half_w = exp(t[:, 2]) * (s / 2.0)
    half_h = exp(t[:, 3]) * (s / 2.0)
    return cx - half_w, cy - half_h, cx + half_w, cy + half_h


def compute_loss(pred: RawPrediction, targets: Targets, weights: LossWeights) -> LossComponents:
    if targets.objectness.shape != pred.objectness.shape:
        raise ShapeError(f"targets {targets.objectness.shape} do not match predictions {pred.objectness.shape}")
    obj = F.bce_with_logits(pred.objectness, targets.objectness.astype(pred.objectness.dtype)).mean()
    batch, rows, cols = np.nonzero(targets.positive)
    if len(batch) == 0:
        zero = Tensor(np.zeros((), dtype=pred.objectness.dtype))
        cls_loss, reg_loss = zero, zero
    else:
        cls_logits = pred.classification[(batch, np.zeros_like(batch), rows, cols)]
        cls_loss = F.bce_with_logits(cls_logits, np.ones(len(batch), dtype=cls_logits.dtype)).mean()
        gt = targets.boxes[batch, rows, cols].astype(pred.regression.dtype)
        px1, py1, px2, py2 = decoded_positive_boxes(pred, batch, rows, cols)
        inter_w = maximum(minimum(px2, gt[:, 2]) - maximum(px1, gt[:, 0]), 0.0)
        inter_h = maximum(minimum(py2, gt[:, 3]) - maximum(py1, gt[:, 1]), 0.0)
        inter = inter_w * inter_h
        union = (px2 - px1) * (py2 - py1) + box_area(gt).astype(gt.dtype) - inter
        reg_loss = (1.0 - inter / union).mean()
    total = reg_loss * weights.reg + cls_loss * weights.cls + obj * weights.obj
    return LossComponents(total, reg_loss, cls_loss, obj)


def decode(pred: RawPrediction, conf_thresh: float) -> List[DetectionSet]:
    """Per batch item: score = sigmoid(obj) * sigmoid(cls), cells at or above the threshold.

    The comparison happens in log space, so saturated logits never reach a
    threshold of 1.0.
    """
    out = []
    with np.errstate(divide="ignore"):
        log_thresh = np.log(conf_thresh)
    for n in range(pred.batch):
        log_scores = log_expit(pred.objectness.data[n, 0].astype(np.float64)) + log_expit(
            pred.classification.data[n, 0].astype(np.float64)
        )
        scores = np.exp(log_scores)
        boxes = decode_grid(pred.regression.data[n].astype(np.float64), pred.stride)
        keep = log_scores >= log_thresh
        out.append(DetectionSet(boxes[keep], scores[keep]).sorted())
    return out


def nms(dets: DetectionSet, iou_thresh: float) -> DetectionSet:
    """Greedy suppression of boxes overlapping a higher-scored kept box by more than ``iou_thresh``."""
    if len(dets) == 0:
        return DetectionSet.empty()
    order = np.argsort(-dets.scores, kind="stable")
    boxes = dets.boxes[order]
    overlaps = box_iou(boxes, boxes)
    suppressed = np.zeros(len(order), dtype=bool)
    keep = []
    for i in range(len(order)):
        if suppressed[i]:
            continue
        keep.append(i)
        suppressed |= overlaps[i] > iou_thresh
    keep = np.asarray(keep, dtype=np.int64)
    return DetectionSet(boxes[keep], dets.scores[order][keep])


def postprocess(pred: RawPrediction, conf_thresh: float, iou_thresh: float, max_detections: int = 100) -> List[DetectionSet]:
    results = []
    for dets in decode(pred, conf_thresh):
        kept = nms(dets, iou_thresh)
        results.append(DetectionSet(kept.boxes[:max_detections], kept.scores[:max_detections]))
    return results
