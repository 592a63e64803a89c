"""Run configuration.

One YAML file whose keys mirror ``PipelineConfig`` exactly. Unknown keys are
rejected. See ``hypertea.desk.yml`` for a documented example.
"""
from __future__ import annotations

from pathlib import Path
from typing import List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from errors import ConfigError

PRESETS = ("full", "desk", "overfit")


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class BackboneConfig(StrictModel):
    widths: List[int] = Field(default_factory=lambda: [16, 32, 64])

    @field_validator("widths")
    @classmethod
    def _three_stages(cls, v: List[int]) -> List[int]:
        if len(v) != 3 or any(w < 1 for w in v):
            raise ValueError("backbone needs exactly three positive stage widths (output stride 8)")
        return v

    @property
    def stride(self) -> int:
        return 8

    @property
    def out_channels(self) -> int:
        return self.widths[-1]


class LossWeights(StrictModel):
    reg: float = Field(5.0, ge=0)
    cls: float = Field(1.0, ge=0)
    obj: float = Field(1.0, ge=0)

    @model_validator(mode="after")
    def _any_positive(self) -> "LossWeights":
        if self.reg <= 0 and self.cls <= 0 and self.obj <= 0:
            raise ValueError("at least one loss weight must be positive")
        return self


class OptimizerConfig(StrictModel):
    lr: float = Field(0.01, ge=0)
    momentum: float = Field(0.937, ge=0, lt=1)
    weight_decay: float = Field(5e-4, ge=0)
    batch_size: int = Field(4, ge=1)
    epochs: int = Field(50, ge=0)
    max_steps: Optional[int] = Field(None, ge=0)
    lr_drop_factor: float = Field(0.1, gt=0)
    lr_drop_at: float = Field(0.8, gt=0, le=1)


class AblationConfig(StrictModel):
    use_gtem: bool = True
    use_ltem: bool = True
    use_dpcb: bool = True
    use_hcu: bool = True
    use_glta: bool = True
    use_csam: bool = True


class PipelineConfig(StrictModel):
    frames: int = Field(5, ge=1)
    input_size: Tuple[int, int] = (64, 64)
    backbone: BackboneConfig = Field(default_factory=BackboneConfig)
    tau: float = Field(8.0, ge=0)
    ltem_layers: int = Field(1, ge=1)
    patch_size: int = Field(2, ge=1)
    loss: LossWeights = Field(default_factory=LossWeights)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    ablation: AblationConfig = Field(default_factory=AblationConfig)
    nms_iou: float = Field(0.65, gt=0, le=1)
    conf_thresh: float = Field(0.001, ge=0, le=1)
    match_iou: float = Field(0.5, gt=0, le=1)
    precision: Literal["float32", "float64"] = "float32"
    seed: int = 0
    log_every: int = Field(10, ge=1)

    @model_validator(mode="after")
    def _extents_divisible(self) -> "PipelineConfig":
        unit = self.backbone.stride * self.patch_size
        h, w = self.input_size
        if h % unit or w % unit:
            raise ValueError(f"input_size {h}x{w} must be divisible by stride*patch_size = {unit}")
        return self

    @property
    def feature_size(self) -> Tuple[int, int]:
        return self.input_size[0] // self.backbone.stride, self.input_size[1] // self.backbone.stride

    @classmethod
    def preset(cls, name: str) -> "PipelineConfig":
        if name == "full":
            return cls()
        if name == "desk":
            return cls(optimizer=OptimizerConfig(epochs=10))
        if name == "overfit":
            return cls(optimizer=OptimizerConfig(epochs=1000, max_steps=300, weight_decay=0.0), log_every=10)
        raise ConfigError(f"unknown preset '{name}', expected one of {', '.join(PRESETS)}")

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "PipelineConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"invalid YAML: {e}") from e
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping at the top level")
        return cls.model_validate(data)


class SceneConfig(StrictModel):
    """Synthetic scene parameters; every sequence draws its own seed from ``seed``."""

    height: int = Field(64, ge=8)
    width: int = Field(64, ge=8)
    frames: int = Field(5, ge=1)
    targets_min: int = Field(1, ge=1)
    targets_max: int = Field(3, ge=1)
    sigma_min: float = Field(0.7, gt=0)
    sigma_max: float = Field(2.0, gt=0)
    scr: float = Field(3.0, ge=0)
    octaves: int = Field(3, ge=0)
    drift: Tuple[float, float] = (0.6, 0.3)
    jitter: float = Field(0.3, ge=0)
    speed_min: float = Field(0.5, ge=0)
    speed_max: float = Field(2.0, ge=0)
    motion: Literal["linear", "circle", "zigzag"] = "linear"
    target_mse: float = Field(33.0, ge=0)
    seed: int = 0

    @model_validator(mode="after")
    def _consistent(self) -> "SceneConfig":
        if self.height % 8 or self.width % 8:
            raise ValueError(f"scene extent {self.height}x{self.width} must be divisible by 8")
        if self.targets_max < self.targets_min:
            raise ValueError("targets_max must be >= targets_min")
        if self.sigma_max < self.sigma_min:
            raise ValueError("sigma_max must be >= sigma_min")
        if self.speed_max < self.speed_min:
            raise ValueError("speed_max must be >= speed_min")
        return self


def load_config(path: Path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return PipelineConfig.from_yaml(path.read_text(encoding="utf-8"))


def dump_config(config: PipelineConfig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(config.to_yaml(), encoding="utf-8")
    return path
