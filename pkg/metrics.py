"""Detection metrics: greedy matching, precision/recall/F1, all-points AP at IoU 0.5,
PR-curve rows, and the inter-frame MSE of a sequence.

``metrics.json`` (version 1)::

    {"version": 1, "map50": float,
     "pr_at_conf":    {"precision", "recall", "f1", "conf"},
     "pr_at_best_f1": {"precision", "recall", "f1", "conf"},
     "history": [{"epoch", "step", "loss", "map50", "f1"}, ...]}

``pr_curve.csv`` has the header ``threshold,precision,recall`` and one row per
distinct detection score, thresholds descending.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from detection import DetectionSet, box_iou
from errors import DataError

METRICS_VERSION = 1

# one evaluated frame: its detections and its ground-truth boxes
Frame = Tuple[DetectionSet, np.ndarray]


@dataclass
class MatchResult:
    tp: int
    fp: int
    fn: int
    # per detection (score order): index of the matched gt, or None
    matched: List[Optional[int]] = field(default_factory=list)


def match(dets: DetectionSet, gts: np.ndarray, iou_min: float = 0.5) -> MatchResult:
    """Each detection, in descending score order, takes the highest-IoU unmatched gt."""
    gts = np.asarray(gts, dtype=np.float64).reshape(-1, 4)
    dets = dets.sorted()
    taken = np.zeros(len(gts), dtype=bool)
    matched: List[Optional[int]] = []
    if len(dets) and len(gts):
        overlaps = box_iou(dets.boxes, gts)
    for i in range(len(dets)):
        best = None
        if len(gts):
            candidates = np.where(taken, -1.0, overlaps[i])
            j = int(np.argmax(candidates))
            if candidates[j] >= iou_min:
                best = j
                taken[j] = True
        matched.append(best)
    tp = sum(m is not None for m in matched)
    return MatchResult(tp=tp, fp=len(dets) - tp, fn=len(gts) - tp, matched=matched)


def prf1(m: MatchResult) -> Tuple[float, float, float]:
    precision = m.tp / (m.tp + m.fp) if m.tp + m.fp else 0.0
    recall = m.tp / (m.tp + m.fn) if m.tp + m.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass
class Sweep:
    """All detections of an evaluation pooled and sorted by descending score."""

    scores: np.ndarray
    true_positive: np.ndarray
    num_gt: int

    def cumulative(self) -> Tuple[np.ndarray, np.ndarray]:
        tp = np.cumsum(self.true_positive)
        fp = np.cumsum(~self.true_positive)
        precision = tp / np.maximum(tp + fp, 1)
        recall = tp / self.num_gt if self.num_gt else np.zeros_like(precision, dtype=np.float64)
        return precision, recall


def sweep(frames: Sequence[Frame], iou_min: float = 0.5) -> Sweep:
    scores, flags, num_gt = [], [], 0
    for dets, gts in frames:
        result = match(dets, gts, iou_min)
        ordered = dets.sorted()
        scores.append(ordered.scores)
        flags.append(np.array([m is not None for m in result.matched], dtype=bool))
        num_gt += len(np.asarray(gts).reshape(-1, 4))
    scores = np.concatenate(scores) if scores else np.zeros(0)
    flags = np.concatenate(flags) if flags else np.zeros(0, dtype=bool)
    order = np.argsort(-scores, kind="stable")
    return Sweep(scores[order], flags[order], num_gt)


def average_precision(s: Sweep) -> float:
    """Area under the precision envelope (all-points interpolation)."""
    if s.num_gt == 0 or len(s.scores) == 0:
        return 0.0
    precision, recall = s.cumulative()
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.where(np.diff(mrec) > 0)[0] + 1
    return float(np.sum((mrec[steps] - mrec[steps - 1]) * mpre[steps]))


def map50(frames: Sequence[Frame]) -> float:
    # single class, so mAP is the AP of that class
    return average_precision(sweep(frames, 0.5))


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


def pr_curve(s: Sweep) -> List[PRPoint]:
    if len(s.scores) == 0:
        return []
    precision, recall = s.cumulative()
    # last index of every run of equal scores
    ends = np.flatnonzero(np.append(s.scores[1:] != s.scores[:-1], True))
    return [PRPoint(float(s.scores[i]), float(precision[i]), float(recall[i])) for i in ends]


def write_pr_curve(points: Sequence[PRPoint], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["threshold", "precision", "recall"])
        for p in points:
            writer.writerow([repr(p.threshold), repr(p.precision), repr(p.recall)])
    return path


def read_pr_curve(path: Path) -> List[PRPoint]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"PR curve not found: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != ["threshold", "precision", "recall"]:
            raise DataError(f"{path} is not a PR curve (header {reader.fieldnames})")
        return [PRPoint(float(r["threshold"]), float(r["precision"]), float(r["recall"])) for r in reader]


def sequence_mse(frames: np.ndarray) -> float:
    """Mean over t of the per-pixel mean squared difference of frames t and t+1 (0-255 scale)."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim < 3 or frames.shape[0] < 2:
        raise DataError(f"sequence_mse needs at least two frames, got shape {frames.shape}")
    diff = np.diff(frames, axis=0)
    return float(np.mean(diff.reshape(diff.shape[0], -1) ** 2, axis=1).mean())


class OperatingPoint(BaseModel):
    model_config = ConfigDict(extra="forbid")

    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    conf: float = 0.0


class HistoryEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epoch: int
    step: int
    loss: float
    map50: float
    f1: float


class MetricsReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    version: int = METRICS_VERSION
    map50: float = 0.0
    pr_at_conf: OperatingPoint = Field(default_factory=OperatingPoint)
    pr_at_best_f1: OperatingPoint = Field(default_factory=OperatingPoint)
    history: List[HistoryEntry] = Field(default_factory=list)


def operating_point(frames: Sequence[Frame], conf: float, iou_min: float = 0.5) -> OperatingPoint:
    tp = fp = fn = 0
    for dets, gts in frames:
        keep = dets.scores >= conf
        m = match(DetectionSet(dets.boxes[keep], dets.scores[keep]), gts, iou_min)
        tp, fp, fn = tp + m.tp, fp + m.fp, fn + m.fn
    p, r, f1 = prf1(MatchResult(tp, fp, fn))
    return OperatingPoint(precision=p, recall=r, f1=f1, conf=conf)


def evaluate(frames: Sequence[Frame], conf_thresh: float, iou_min: float = 0.5) -> Tuple[MetricsReport, List[PRPoint]]:
    s = sweep(frames, iou_min)
    curve = pr_curve(s)
    best = OperatingPoint()
    for point in curve:
        if point.f1 > best.f1:
            best = OperatingPoint(precision=point.precision, recall=point.recall, f1=point.f1, conf=point.threshold)
    report = MetricsReport(
        map50=average_precision(s),
        pr_at_conf=operating_point(frames, conf_thresh, iou_min),
        pr_at_best_f1=best,
    )
    return report, curve


def write_metrics(report: MetricsReport, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.model_dump(), indent=2, sort_keys=False) + "\n", encoding="utf-8")
    return path


def read_metrics(path: Path) -> MetricsReport:
    path = Path(path)
    if not path.exists():
        raise DataError(f"metrics file not found: {path}")
    return MetricsReport.model_validate_json(path.read_text(encoding="utf-8"))
