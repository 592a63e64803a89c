"""Tiny CSP-style per-frame feature extractor (output stride 8)."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from engine.layers import ConvBlock
from engine.module import Module, ModuleList
from engine.tensor import Tensor, concat
from errors import ShapeError

OUTPUT_STRIDE = 8


class CSPBlock(Module):
    """Split into a residual bottleneck path and a shortcut path, then merge."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        half = max(channels // 2, 1)
        self.main = ConvBlock(channels, half, 1, rng)
        self.shortcut = ConvBlock(channels, half, 1, rng)
        self.bottleneck_reduce = ConvBlock(half, half, 1, rng)
        self.bottleneck_expand = ConvBlock(half, half, 3, rng)
        self.merge = ConvBlock(2 * half, channels, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        a = self.main(x)
        a = a + self.bottleneck_expand(self.bottleneck_reduce(a))
        return self.merge(concat([a, self.shortcut(x)], axis=1))


class Stage(Module):
    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        super().__init__()
        self.down = ConvBlock(in_channels, out_channels, 3, rng, stride=2)
        self.csp = CSPBlock(out_channels, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.csp(self.down(x))


class Backbone(Module):
    """Three stride-2 stages; the same weights are applied to every frame."""

    def __init__(self, widths: Sequence[int] = (16, 32, 64), in_channels: int = 1, rng: Optional[np.random.Generator] = None):
        super().__init__()
        if len(widths) != 3:
            raise ShapeError(f"backbone needs three stage widths for stride 8, got {list(widths)}")
        rng = rng or np.random.default_rng(0)
        stages = []
        for width in widths:
            stages.append(Stage(in_channels, width, rng))
            in_channels = width
        self.stages = ModuleList(stages)
        self.out_channels = int(widths[-1])

    def forward(self, frames: Tensor) -> Tensor:
        """(B, 1, H0, W0) -> (B, C, H0/8, W0/8)."""
        h, w = frames.shape[-2:]
        if h % OUTPUT_STRIDE or w % OUTPUT_STRIDE:
            raise ShapeError(f"frame extent {h}x{w} is not divisible by the backbone stride {OUTPUT_STRIDE}")
        x = frames
        for stage in self.stages:
            x = stage(x)
        return x

    def extract(self, sequence: Tensor) -> Tensor:
        """(N, T, 1, H0, W0) -> (N, T, C, H, W), frames folded into the batch."""
        n, t = sequence.shape[:2]
        features = self.forward(sequence.reshape(n * t, *sequence.shape[2:]))
        return features.reshape(n, t, *features.shape[1:])
