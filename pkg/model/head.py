"""Anchor-free single-scale detection head."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from engine.layers import Conv2d, ConvBlock
from engine.module import Module
from engine.tensor import Tensor


@dataclass
class RawPrediction:
    """Per-cell head outputs over the H x W feature grid.

    ``regression`` holds (tx, ty, tw, th): center offsets inside the cell
    (before the sigmoid) and log width/height in stride units.
    """

    objectness: Tensor  # (N, 1, H, W)
    classification: Tensor  # (N, 1, H, W)
    regression: Tensor  # (N, 4, H, W)
    stride: int

    @property
    def grid(self):
        return tuple(self.objectness.shape[2:])

    @property
    def batch(self) -> int:
        return self.objectness.shape[0]


class HeadBranch(Module):
    def __init__(self, channels: int, outputs: int, rng: np.random.Generator):
        super().__init__()
        self.block1 = ConvBlock(channels, channels, 3, rng)
        self.block2 = ConvBlock(channels, channels, 3, rng)
        self.project = Conv2d(channels, outputs, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.project(self.block2(self.block1(x)))


class DetectionHead(Module):
    def __init__(self, channels: int, stride: int = 8, rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.stride = stride
        self.obj = HeadBranch(channels, 1, rng)
        self.cls = HeadBranch(channels, 1, rng)
        self.reg = HeadBranch(channels, 4, rng)

    def forward(self, features: Tensor) -> RawPrediction:
        return RawPrediction(self.obj(features), self.cls(features), self.reg(features), self.stride)
