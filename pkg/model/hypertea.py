"""End-to-end detector: backbone -> (GTEM, LTEM) -> TAM -> head on the keyframe."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from config import AblationConfig, PipelineConfig
from engine.module import Module
from engine.tensor import Tensor
from errors import ShapeError
from model.backbone import OUTPUT_STRIDE, Backbone
from model.gtem import GlobalTemporalEnhancement
from model.head import DetectionHead, RawPrediction
from model.ltem import LocalTemporalEnhancement
from model.tam import TemporalAlignment


@dataclass
class Features:
    spatial: Tensor  # F_s (N, T, C, H, W)
    global_temporal: Tensor  # G_st (N, T, C, H, W)
    local_temporal: Tensor  # L_st (N, C, H, W)
    fused: Tensor  # F_gl (N, C, H, W)


class HyperTea(Module):
    def __init__(
        self,
        frames: int = 5,
        widths=(16, 32, 64),
        tau: float = 8.0,
        ltem_layers: int = 1,
        patch_size: int = 2,
        ablation: Optional[AblationConfig] = None,
        seed: int = 0,
    ):
        super().__init__()
        ablation = ablation or AblationConfig()
        rng = np.random.default_rng(seed)
        self.frames = frames
        self.patch_size = patch_size
        self.use_gtem = ablation.use_gtem
        self.use_ltem = ablation.use_ltem
        self.backbone = Backbone(widths, rng=rng)
        channels = self.backbone.out_channels
        self.gtem = GlobalTemporalEnhancement(
            channels, frames, rng, tau=tau, use_dpcb=ablation.use_dpcb, use_hcu=ablation.use_hcu
        )
        self.ltem = LocalTemporalEnhancement(channels, ltem_layers, patch_size, rng, tau=tau)
        self.tam = TemporalAlignment(channels, patch_size, rng, use_glta=ablation.use_glta, use_csam=ablation.use_csam)
        self.head = DetectionHead(channels, OUTPUT_STRIDE, rng)

    @classmethod
    def from_config(cls, config: PipelineConfig) -> "HyperTea":
        return cls(
            frames=config.frames,
            widths=tuple(config.backbone.widths),
            tau=config.tau,
            ltem_layers=config.ltem_layers,
            patch_size=config.patch_size,
            ablation=config.ablation,
            seed=config.seed,
        )

    def features(self, clip: Tensor) -> Features:
        if clip.ndim == 4:
            clip = clip.reshape(1, *clip.shape)
        if clip.ndim != 5 or clip.shape[2] != 1:
            raise ShapeError(f"expected frames shaped (N, T, 1, H, W), got {clip.shape}")
        n, t, _, h, w = clip.shape
        if t != self.frames:
            raise ShapeError(f"model expects {self.frames} frames per clip, got {t}")
        unit = OUTPUT_STRIDE * self.patch_size
        if h % unit or w % unit:
            raise ShapeError(f"frame extent {h}x{w} is not divisible by {unit}")
        spatial = self.backbone.extract(clip)
        global_temporal = self.gtem(spatial) if self.use_gtem else spatial
        local_temporal = self.ltem(spatial) if self.use_ltem else spatial[:, t - 1]
        fused = self.tam(global_temporal, local_temporal)
        return Features(spatial, global_temporal, local_temporal, fused)

    def forward(self, clip: Tensor) -> RawPrediction:
        """Frames (N, T, 1, H0, W0) in [0, 1] -> head outputs for each keyframe."""
        return self.head(self.features(clip).fused)

    def parameter_summary(self) -> Dict[str, int]:
        counts = {name: child.num_parameters() for name, child in self.children()}
        counts["total"] = self.num_parameters()
        return counts
