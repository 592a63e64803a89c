"""Layers built from the functional primitives.

Weights are drawn from a caller-supplied ``numpy.random.Generator`` with
uniform fan-in scaling, so a model built twice from the same seed is
bit-identical.
"""
from __future__ import annotations

from typing import Optional, Tuple, Union

import numpy as np

from engine import functional as F
from engine.module import Module, Parameter
from engine.tensor import Tensor, as_tensor, get_dtype, sigmoid, silu, tanh
from errors import ShapeError

Kernel = Union[int, Tuple[int, int]]

ACTIVATIONS = {
    "silu": silu,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "identity": lambda x: x,
}


def _pair(k: Kernel) -> Tuple[int, int]:
    return (k, k) if isinstance(k, int) else tuple(k)


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(get_dtype())


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: Kernel = 3,
        rng: Optional[np.random.Generator] = None,
        stride: int = 1,
        padding: Optional[Tuple[int, int]] = None,
        depthwise: bool = False,
        bias: bool = True,
    ):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.spec = F.ConvSpec(in_channels, out_channels, _pair(kernel), stride, padding, depthwise)
        kh, kw = self.spec.kernel
        fan_in = kh * kw * (1 if depthwise else in_channels)
        self.weight = Parameter(_uniform(rng, self.spec.weight_shape, fan_in))
        self.bias = Parameter(_uniform(rng, (out_channels,), fan_in)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, self.spec)


class BatchNorm2d(Module):
    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.weight = Parameter(np.ones(channels))
        self.bias = Parameter(np.zeros(channels))
        self.register_buffer("running_mean", np.zeros(channels))
        self.register_buffer("running_var", np.ones(channels))

    def forward(self, x: Tensor) -> Tensor:
        if self.training:
            y = F.normalize(x, (0, 2, 3), self.eps)
            count = x.shape[0] * x.shape[2] * x.shape[3]
            batch_mean = x.data.mean(axis=(0, 2, 3))
            batch_var = x.data.var(axis=(0, 2, 3)) * (count / max(count - 1, 1))
            m = self.momentum
            self._buffers["running_mean"] = (1 - m) * self._buffers["running_mean"] + m * batch_mean
            self._buffers["running_var"] = (1 - m) * self._buffers["running_var"] + m * batch_var
        else:
            mean = self._buffers["running_mean"].reshape(1, -1, 1, 1)
            inv = 1.0 / np.sqrt(self._buffers["running_var"].reshape(1, -1, 1, 1) + self.eps)
            y = (x - as_tensor(mean)) * as_tensor(inv)
        return y * self.weight.reshape(1, -1, 1, 1) + self.bias.reshape(1, -1, 1, 1)


class ConvBlock(Module):
    """Basic convolution component: conv (no bias) -> batch norm -> activation."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: Kernel = 3,
        rng: Optional[np.random.Generator] = None,
        stride: int = 1,
        depthwise: bool = False,
        act: str = "silu",
    ):
        super().__init__()
        self.conv = Conv2d(in_channels, out_channels, kernel, rng, stride=stride, depthwise=depthwise, bias=False)
        self.bn = BatchNorm2d(out_channels)
        self.act = act

    def forward(self, x: Tensor) -> Tensor:
        return ACTIVATIONS[self.act](self.bn(self.conv(x)))


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.weight = Parameter(_uniform(rng, (in_features, out_features), in_features))
        self.bias = Parameter(_uniform(rng, (out_features,), in_features))

    def forward(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class LayerNorm(Module):
    """Layer normalization over the channel axis of every token."""

    def __init__(self, channels: int, axis: int = 1, eps: float = 1e-5):
        super().__init__()
        self.axis = axis
        self.eps = eps
        self.weight = Parameter(np.ones(channels))
        self.bias = Parameter(np.zeros(channels))

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.weight, self.bias, axis=self.axis, eps=self.eps)


class PatchEmbed(Module):
    """ps x ps convolution with stride ps, then per-token layer norm."""

    def __init__(self, in_channels: int, dim: int, patch_size: int, rng: Optional[np.random.Generator] = None):
        super().__init__()
        if patch_size < 1:
            raise ShapeError(f"patch size must be >= 1, got {patch_size}")
        self.patch_size = patch_size
        self.proj = Conv2d(in_channels, dim, patch_size, rng, stride=patch_size, padding=(0, 0))
        self.norm = LayerNorm(dim)

    def forward(self, x: Tensor) -> Tensor:
        ps = self.patch_size
        if x.shape[2] % ps or x.shape[3] % ps:
            raise ShapeError(f"extent {x.shape[2]}x{x.shape[3]} is not divisible by patch size {ps}")
        return self.norm(self.proj(x))


class UpsampleReconstruct(Module):
    """Nearest-neighbour x ps upsample followed by a 3x3 convolution."""

    def __init__(self, dim: int, out_channels: int, patch_size: int, rng: Optional[np.random.Generator] = None):
        super().__init__()
        self.patch_size = patch_size
        self.conv = Conv2d(dim, out_channels, 3, rng)

    def forward(self, x: Tensor, target_extent: Optional[Tuple[int, int]] = None) -> Tensor:
        if target_extent is not None:
            h, w = target_extent
            if h != x.shape[2] * self.patch_size or w != x.shape[3] * self.patch_size:
                raise ShapeError(
                    f"cannot reconstruct {x.shape[2]}x{x.shape[3]} tokens to {h}x{w} with patch size {self.patch_size}"
                )
        return self.conv(F.upsample_nearest(x, self.patch_size))
