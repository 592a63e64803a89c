"""Synthetic moving-infrared-target sequences.

A sequence is a drifting multi-octave smoothed-noise background with 1-3
Gaussian blobs moving along simple motion patterns. The background amplitude
is calibrated so the measured inter-frame MSE lands near the requested value.
Everything is drawn from one seeded generator, so a seed fully determines the
sequence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from scipy import ndimage

from config import SceneConfig
from errors import InfeasibleSceneError
from metrics import sequence_mse

BASE_LEVEL = 96.0
MIN_LOCAL_STD = 4.0
BOX_HALF_WIDTH = 3.0  # in target sigmas
CALIBRATION_TOL = 0.05
CALIBRATION_STEPS = 30
CIRCLE_RADIUS = (2.0, 5.0)
ZIGZAG_AMPLITUDE = (1.5, 3.0)
WINDOW = 11


@dataclass
class Target:
    sigma: float
    centers: np.ndarray  # (T, 2) as (x, y) pixels


@dataclass
class FrameSequence:
    sequence_id: str
    frames: np.ndarray  # (T, H, W) uint8
    boxes: List[np.ndarray]  # per frame (k, 4) x1, y1, x2, y2
    targets: List[Target] = field(default_factory=list)
    background: Optional[np.ndarray] = None  # (T, H, W) uint8, targets not drawn
    amplitude: float = 0.0

    @property
    def length(self) -> int:
        return self.frames.shape[0]

    @property
    def extent(self) -> Tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]

    def mse(self) -> float:
        return sequence_mse(self.frames) if self.length >= 2 else 0.0


# motion patterns: offsets from the start position for t = 0..T-1

def _linear(rng: np.random.Generator, speed: float, frames: int) -> np.ndarray:
    heading = rng.uniform(0, 2 * math.pi)
    t = np.arange(frames)[:, None]
    return t * speed * np.array([math.cos(heading), math.sin(heading)])


def _circle(rng: np.random.Generator, speed: float, frames: int) -> np.ndarray:
    radius = rng.uniform(*CIRCLE_RADIUS)
    phase = rng.uniform(0, 2 * math.pi)
    direction = rng.choice([-1.0, 1.0])
    angles = phase + direction * np.arange(frames) * speed / radius
    points = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return points - points[0]


def _zigzag(rng: np.random.Generator, speed: float, frames: int) -> np.ndarray:
    heading = rng.uniform(0, 2 * math.pi)
    amplitude = rng.uniform(*ZIGZAG_AMPLITUDE)
    forward = np.array([math.cos(heading), math.sin(heading)])
    lateral = np.array([-forward[1], forward[0]])
    t = np.arange(frames)
    # triangle wave between -amplitude and +amplitude, two frames per leg
    wave = amplitude * (2 * np.abs((t / 4.0) % 1.0 - 0.5) * 2 - 1)
    path = t[:, None] * speed * forward + wave[:, None] * lateral
    return path - path[0]


MOTION_PATTERNS: Dict[str, Callable[[np.random.Generator, float, int], np.ndarray]] = {
    "linear": _linear,
    "circle": _circle,
    "zigzag": _zigzag,
}


def worst_case_span(cfg: SceneConfig) -> float:
    travel = cfg.speed_max * (cfg.frames - 1)
    if cfg.motion == "circle":
        return min(travel, 2 * CIRCLE_RADIUS[1])
    if cfg.motion == "zigzag":
        return travel + 2 * ZIGZAG_AMPLITUDE[1]
    return travel


def check_feasible(cfg: SceneConfig) -> None:
    """A target must be able to keep its center 2 sigma inside the frame for all T frames."""
    margin = 2 * cfg.sigma_max + cfg.jitter
    room = min(cfg.height, cfg.width) - 1 - 2 * margin
    span = worst_case_span(cfg)
    if span > room:
        raise InfeasibleSceneError(
            f"a {cfg.motion} target at speed {cfg.speed_max} px/frame spans {span:.1f} px over {cfg.frames} frames, "
            f"but only {max(room, 0):.1f} px fit inside a {cfg.height}x{cfg.width} frame"
        )


def _noise_field(rng: np.random.Generator, shape: Tuple[int, int], octaves: int) -> np.ndarray:
    field_ = np.zeros(shape)
    for k in range(octaves):
        layer = ndimage.gaussian_filter(rng.standard_normal(shape), sigma=2.0 ** k, mode="wrap")
        layer /= layer.std() or 1.0
        field_ += layer * 0.7 ** k
    std = field_.std()
    return (field_ - field_.mean()) / std if std > 0 else field_


def _background_frames(rng: np.random.Generator, cfg: SceneConfig) -> np.ndarray:
    """Unit-amplitude background, shape (T, H, W)."""
    dx, dy = cfg.drift
    pad = int(math.ceil(math.hypot(dx, dy) * (cfg.frames - 1) + cfg.jitter)) + 2
    base = _noise_field(rng, (cfg.height + 2 * pad, cfg.width + 2 * pad), cfg.octaves)
    shake = rng.uniform(-cfg.jitter, cfg.jitter, size=(cfg.frames, 2)) if cfg.jitter > 0 else np.zeros((cfg.frames, 2))
    frames = np.empty((cfg.frames, cfg.height, cfg.width))
    for t in range(cfg.frames):
        offset = (dy * t + shake[t, 1], dx * t + shake[t, 0])
        moved = ndimage.shift(base, offset, order=1, mode="reflect") if any(offset) else base
        frames[t] = moved[pad : pad + cfg.height, pad : pad + cfg.width]
    return frames


def _targets(rng: np.random.Generator, cfg: SceneConfig) -> List[Target]:
    count = int(rng.integers(cfg.targets_min, cfg.targets_max + 1))
    pattern = MOTION_PATTERNS[cfg.motion]
    targets = []
    for _ in range(count):
        sigma = float(rng.uniform(cfg.sigma_min, cfg.sigma_max))
        speed = float(rng.uniform(cfg.speed_min, cfg.speed_max))
        path = pattern(rng, speed, cfg.frames)
        jitter = rng.uniform(-cfg.jitter, cfg.jitter, size=path.shape) if cfg.jitter > 0 else np.zeros(path.shape)
        path = path + jitter
        margin = 2 * sigma
        lo = margin - path.min(axis=0)
        hi = np.array([cfg.width - 1, cfg.height - 1]) - margin - path.max(axis=0)
        if np.any(hi < lo):
            raise InfeasibleSceneError(f"target path {np.ptp(path, axis=0)} does not fit a {cfg.height}x{cfg.width} frame")
        start = rng.uniform(lo, hi)
        targets.append(Target(sigma, start + path))
    return targets


def _quantize(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(x), 0, 255).astype(np.uint8)


def _window(image: np.ndarray, x: int, y: int, half: int = WINDOW // 2) -> np.ndarray:
    h, w = image.shape
    return image[max(y - half, 0) : min(y + half + 1, h), max(x - half, 0) : min(x + half + 1, w)]


def _ring_std(image: np.ndarray, x: int, y: int) -> float:
    """Std of the 11x11 neighbourhood with the central 5x5 excluded."""
    h, w = image.shape
    half = WINDOW // 2
    y0, y1 = max(y - half, 0), min(y + half + 1, h)
    x0, x1 = max(x - half, 0), min(x + half + 1, w)
    yy, xx = np.mgrid[y0:y1, x0:x1]
    ring = (np.abs(yy - y) > 2) | (np.abs(xx - x) > 2)
    window = image[y0:y1, x0:x1].astype(np.float64)
    return float(window[ring].std()) if ring.any() else 0.0


def _render(cfg: SceneConfig, unit_background: np.ndarray, targets: List[Target], amplitude: float):
    background = _quantize(BASE_LEVEL + amplitude * unit_background)
    frames = background.astype(np.float64)
    ys, xs = np.mgrid[0 : cfg.height, 0 : cfg.width]
    for t in range(cfg.frames):
        for target in targets:
            cx, cy = target.centers[t]
            px, py = int(round(cx)), int(round(cy))
            peak = cfg.scr * max(_ring_std(background[t], px, py), MIN_LOCAL_STD)
            blob = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * target.sigma ** 2))
            median = float(np.median(_window(background[t], px, py)))
            # raise the peak until the center pixel clears the local background median
            for _ in range(8):
                value = np.rint(background[t, py, px] + peak * blob[py, px])
                if value > median or value >= 255:
                    break
                peak *= 1.5
            frames[t] += peak * blob
    return _quantize(frames), background


def _boxes(cfg: SceneConfig, targets: List[Target]) -> List[np.ndarray]:
    boxes = []
    for t in range(cfg.frames):
        frame_boxes = []
        for target in targets:
            cx, cy = target.centers[t]
            r = BOX_HALF_WIDTH * target.sigma
            frame_boxes.append([max(cx - r, 0.0), max(cy - r, 0.0), min(cx + r, float(cfg.width)), min(cy + r, float(cfg.height))])
        boxes.append(np.asarray(frame_boxes, dtype=np.float64).reshape(-1, 4))
    return boxes


def generate(cfg: SceneConfig, sequence_id: str = "seq") -> FrameSequence:
    check_feasible(cfg)
    rng = np.random.default_rng(cfg.seed)
    unit_background = _background_frames(rng, cfg)
    targets = _targets(rng, cfg)

    amplitude = 0.0
    frames, background = _render(cfg, unit_background, targets, amplitude)
    calibrate = cfg.frames >= 2 and cfg.octaves > 0 and cfg.target_mse > 0
    if calibrate:
        amplitude = 10.0
        for step in range(CALIBRATION_STEPS):
            frames, background = _render(cfg, unit_background, targets, amplitude)
            measured = sequence_mse(frames)
            logger.debug(f"{sequence_id}: calibration step {step} amplitude={amplitude:.3f} mse={measured:.2f}")
            if abs(measured - cfg.target_mse) <= CALIBRATION_TOL * cfg.target_mse:
                break
            ratio = math.sqrt(cfg.target_mse / measured) if measured > 0 else 4.0
            amplitude *= min(max(ratio, 0.25), 4.0)
        else:
            logger.warning(
                f"{sequence_id}: inter-frame MSE {measured:.2f} did not reach {cfg.target_mse} "
                f"within {CALIBRATION_STEPS} calibration steps"
            )
    return FrameSequence(sequence_id, frames, _boxes(cfg, targets), targets, background, amplitude)
