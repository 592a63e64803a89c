"""PR curve raster (binary PPM) drawn with OpenCV primitives."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import cv2
import numpy as np

from errors import DataError
from metrics import PRPoint

BACKGROUND = (255, 255, 255)
AXIS_COLOR = (0, 0, 0)
GRID_COLOR = (220, 220, 220)
CURVE_COLOR = (200, 60, 20)


def render_pr_curve(points: Sequence[PRPoint], size: int = 400, margin: int = 40, title: str = "") -> np.ndarray:
    """Recall on x, precision on y, both in [0, 1]; the curve starts at recall 0."""
    canvas = np.full((size, size, 3), BACKGROUND, dtype=np.uint8)
    span = size - 2 * margin

    def to_px(recall: float, prec: float):
        return int(round(margin + recall * span)), int(round(size - margin - prec * span))

    for k in range(11):
        v = k / 10
        cv2.line(canvas, to_px(v, 0), to_px(v, 1), GRID_COLOR, 1)
        cv2.line(canvas, to_px(0, v), to_px(1, v), GRID_COLOR, 1)
    cv2.line(canvas, to_px(0, 0), to_px(1, 0), AXIS_COLOR, 1)
    cv2.line(canvas, to_px(0, 0), to_px(0, 1), AXIS_COLOR, 1)
    cv2.putText(canvas, "recall", (size // 2 - 20, size - 10), cv2.FONT_HERSHEY_SIMPLEX, 0.4, AXIS_COLOR, 1)
    cv2.putText(canvas, "precision", (4, margin - 10), cv2.FONT_HERSHEY_SIMPLEX, 0.4, AXIS_COLOR, 1)
    if title:
        cv2.putText(canvas, title, (margin, 16), cv2.FONT_HERSHEY_SIMPLEX, 0.45, AXIS_COLOR, 1)
    if points:
        first = points[0]
        polyline = [to_px(0.0, first.precision)] + [to_px(p.recall, p.precision) for p in points]
        cv2.polylines(canvas, [np.array(polyline, dtype=np.int32).reshape(-1, 1, 2)], False, CURVE_COLOR, 2)
    return canvas


def write_pr_plot(points: Sequence[PRPoint], path: Path, title: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), render_pr_curve(points, title=title), [cv2.IMWRITE_PXM_BINARY, 1]):
        raise DataError(f"cannot write plot {path}")
    return path
