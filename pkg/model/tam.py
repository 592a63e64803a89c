"""Temporal alignment: cross-attention between local and global temporal features
(GLTA) followed by combined spatial/channel attention (CSAM)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from engine import functional as F
from engine.layers import Conv2d, LayerNorm, Linear, PatchEmbed, UpsampleReconstruct
from engine.module import Module
from engine.tensor import Tensor, amax, concat, sigmoid, std
from errors import ShapeError


class ProjectionStack(Module):
    """1x1 -> 3x3 -> 1x1 convolutions on a token grid."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.inner = Conv2d(channels, channels, 1, rng)
        self.spatial = Conv2d(channels, channels, 3, rng)
        self.outer = Conv2d(channels, channels, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.outer(self.spatial(self.inner(x)))


@dataclass
class Attention:
    values: Tensor  # (N, Lq, C) attended values
    weights: Tensor  # (N, Lq, Lk)
    v: Tensor  # (N, Lk, C)


def _tokens(grid: Tensor) -> Tensor:
    """(N, C, h, w) -> (N, h*w, C)."""
    n, c, h, w = grid.shape
    return grid.reshape(n, c, h * w).transpose(0, 2, 1)


class GLTA(Module):
    def __init__(self, channels: int, patch_size: int = 2, rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.channels = channels
        self.patch_size = patch_size
        self.embed_global = PatchEmbed(channels, channels, patch_size, rng)
        self.embed_local = PatchEmbed(channels, channels, patch_size, rng)
        self.query = ProjectionStack(channels, rng)
        self.key = ProjectionStack(channels, rng)
        self.value = ProjectionStack(channels, rng)
        self.out = Conv2d(channels, channels, 1, rng)
        self.mix_norm = LayerNorm(channels)
        self.reconstruct = UpsampleReconstruct(channels, channels, patch_size, rng)
        self.norm = LayerNorm(channels)

    def attend(self, global_features: Tensor, local_tokens: Tensor) -> Attention:
        """Queries from the local token grid against keys/values from every frame."""
        n, t, c, h, w = global_features.shape
        embedded = self.embed_global(global_features.reshape(n * t, c, h, w))
        gh, gw = embedded.shape[2:]
        keys = _tokens(self.key(embedded)).reshape(n, t * gh * gw, c)
        values = _tokens(self.value(embedded)).reshape(n, t * gh * gw, c)
        queries = _tokens(self.query(local_tokens))
        attended, weights = F.scaled_dot_attention(queries, keys, values)
        return Attention(attended, weights, values)

    def forward(self, global_features: Tensor, local_features: Tensor) -> Tensor:
        """G_st (N, T, C, H, W) and L_st (N, C, H, W) -> R (N, C, H, W)."""
        n, t, c, h, w = global_features.shape
        if local_features.shape != (n, c, h, w):
            raise ShapeError(f"local features {local_features.shape} do not match global {global_features.shape}")
        ps = self.patch_size
        if h % ps or w % ps:
            raise ShapeError(f"feature extent {h}x{w} is not divisible by patch size {ps}")
        local_tokens = self.embed_local(local_features)
        gh, gw = local_tokens.shape[2:]
        attention = self.attend(global_features, local_tokens)
        grid = attention.values.transpose(0, 2, 1).reshape(n, c, gh, gw)
        mixed = self.mix_norm(self.out(grid) + local_tokens)
        keyframe = global_features[:, t - 1]
        return self.norm(keyframe + self.reconstruct(mixed, target_extent=(h, w)))

    def bypass(self, global_features: Tensor, local_features: Tensor) -> Tensor:
        """Alignment disabled: LN(G_T + L_st)."""
        t = global_features.shape[1]
        return self.norm(global_features[:, t - 1] + local_features)


@dataclass
class CSAMParts:
    spatial: Tensor  # X_s
    spatial_attended: Tensor  # X_sa
    channel_gate: Tensor  # X_ca, (N, C)
    output: Tensor  # X_sc


class CSAM(Module):
    def __init__(self, channels: int, rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.entry = Conv2d(channels, channels, 1, rng)
        self.dw3 = Conv2d(channels, channels, 3, rng, depthwise=True)
        self.dw5 = Conv2d(channels, channels, 5, rng, depthwise=True)
        self.merge = Conv2d(2 * channels, channels, 1, rng)
        self.spatial_gate = Conv2d(channels, 1, 1, rng)
        self.fc = Linear(2 * channels, channels, rng)

    def forward_with_parts(self, x: Tensor) -> CSAMParts:
        n, c, h, w = x.shape
        entry = self.entry(x)
        x_s = self.merge(concat([self.dw3(entry), self.dw5(entry)], axis=1))
        x_sa = sigmoid(self.spatial_gate(x_s)) * x_s
        flat = x.reshape(n, c, h * w)
        stats = concat([amax(flat, axis=-1), std(flat, axis=-1)], axis=1)
        x_ca = sigmoid(self.fc(stats))
        out = x_ca.reshape(n, c, 1, 1) * x_sa + x
        return CSAMParts(x_s, x_sa, x_ca, out)

    def forward(self, x: Tensor) -> Tensor:
        return self.forward_with_parts(x).output


class TemporalAlignment(Module):
    def __init__(
        self,
        channels: int,
        patch_size: int = 2,
        rng: Optional[np.random.Generator] = None,
        use_glta: bool = True,
        use_csam: bool = True,
    ):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.use_glta = use_glta
        self.use_csam = use_csam
        self.glta = GLTA(channels, patch_size, rng)
        self.csam = CSAM(channels, rng)

    def forward(self, global_features: Tensor, local_features: Tensor) -> Tensor:
        if self.use_glta:
            aligned = self.glta(global_features, local_features)
        else:
            aligned = self.glta.bypass(global_features, local_features)
        return self.csam(aligned) if self.use_csam else aligned
