"""Global temporal enhancement: aggregate the window, enhance, scatter back per frame."""
from __future__ import annotations

from typing import Optional

import numpy as np

from engine.layers import Conv2d, ConvBlock
from engine.module import Module
from engine.tensor import Tensor, concat
from errors import ShapeError
from model.hypergraph import DEFAULT_TAU, HypergraphConv


class Aggregate(Module):
    """Channel-concat of all T frames (T*C channels) followed by two conv blocks down to C."""

    def __init__(self, channels: int, frames: int, rng: np.random.Generator):
        super().__init__()
        self.frames = frames
        self.reduce = ConvBlock(frames * channels, channels, 3, rng)
        self.refine = ConvBlock(channels, channels, 3, rng)

    def forward(self, features: Tensor) -> Tensor:
        n, t, c, h, w = features.shape
        if t != self.frames:
            raise ShapeError(f"aggregation was built for {self.frames} frames, got {t}")
        return self.refine(self.reduce(features.reshape(n, t * c, h, w)))


class DirectionPreferredBlock(Module):
    """Horizontal (1x5), vertical (5x1) and point (1x1) branches, each followed
    by a 3x3 depthwise conv, fused by a 3x3 conv on top of a residual."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.horizontal = ConvBlock(channels, channels, (1, 5), rng)
        self.horizontal_dw = ConvBlock(channels, channels, 3, rng, depthwise=True)
        self.vertical = ConvBlock(channels, channels, (5, 1), rng)
        self.vertical_dw = ConvBlock(channels, channels, 3, rng, depthwise=True)
        self.point = ConvBlock(channels, channels, 1, rng)
        self.point_dw = ConvBlock(channels, channels, 3, rng, depthwise=True)
        self.fuse = Conv2d(3 * channels, channels, 3, rng)

    def branches(self, x: Tensor):
        return (
            self.horizontal_dw(self.horizontal(x)),
            self.vertical_dw(self.vertical(x)),
            self.point_dw(self.point(x)),
        )

    def forward(self, x: Tensor) -> Tensor:
        return self.fuse(concat(list(self.branches(x)), axis=1)) + x


class GlobalTemporalEnhancement(Module):
    def __init__(
        self,
        channels: int,
        frames: int,
        rng: Optional[np.random.Generator] = None,
        tau: float = DEFAULT_TAU,
        use_dpcb: bool = True,
        use_hcu: bool = True,
    ):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.use_dpcb = use_dpcb
        self.use_hcu = use_hcu
        self.aggregate = Aggregate(channels, frames, rng)
        self.dpcb = DirectionPreferredBlock(channels, rng)
        self.hcu = HypergraphConv(channels, rng, tau)
        # one parameter set shared by every time index
        self.scatter_reduce = ConvBlock(2 * channels, channels, 3, rng)
        self.scatter_refine = ConvBlock(channels, channels, 3, rng)

    def global_context(self, features: Tensor) -> Tensor:
        """(N, T, C, H, W) -> G_h: (N, C, H, W)."""
        context = self.aggregate(features)
        if self.use_dpcb:
            context = self.dpcb(context)
        if self.use_hcu:
            context = self.hcu.tokens(context)
        return context

    def forward(self, features: Tensor) -> Tensor:
        """(N, T, C, H, W) -> G_st with the same shape."""
        n, t, c, h, w = features.shape
        context = self.global_context(features)
        broadcast = concat([context.reshape(n, 1, c, h, w)] * t, axis=1)
        paired = concat([features, broadcast], axis=2).reshape(n * t, 2 * c, h, w)
        out = self.scatter_refine(self.scatter_reduce(paired))
        return out.reshape(n, t, c, h, w)
