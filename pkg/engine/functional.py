"""Neural primitives on NCHW tensors.

Convolution is done by gathering sliding windows (im2col through a strided
view) and contracting them against the kernel with ``tensordot``/``einsum``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import special

from engine.tensor import Tensor, _record, mean, power, sub
from errors import ShapeError


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: Tuple[int, int] = (3, 3)
    stride: int = 1
    padding: Optional[Tuple[int, int]] = None  # None means same-padding
    depthwise: bool = False

    def __post_init__(self):
        if self.depthwise and self.in_channels != self.out_channels:
            raise ShapeError(
                f"depthwise convolution needs in_channels == out_channels, got {self.in_channels} -> {self.out_channels}"
            )
        if self.stride < 1:
            raise ShapeError(f"stride must be >= 1, got {self.stride}")

    @property
    def pad(self) -> Tuple[int, int]:
        if self.padding is not None:
            return self.padding
        return self.kernel[0] // 2, self.kernel[1] // 2

    @property
    def weight_shape(self) -> Tuple[int, ...]:
        kh, kw = self.kernel
        if self.depthwise:
            return (self.out_channels, 1, kh, kw)
        return (self.out_channels, self.in_channels, kh, kw)

    def output_extent(self, height: int, width: int) -> Tuple[int, int]:
        ph, pw = self.pad
        kh, kw = self.kernel
        return (height + 2 * ph - kh) // self.stride + 1, (width + 2 * pw - kw) // self.stride + 1


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, : stride * (ho - 1) + 1 : stride, : stride * (wo - 1) + 1 : stride]


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor], spec: ConvSpec) -> Tensor:
    """Cross-correlation of an NCHW batch with an OIHW (or C1HW depthwise) kernel."""
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects an NCHW tensor, got shape {x.shape}")
    n, c, h, w = x.shape
    if c != spec.in_channels:
        raise ShapeError(f"conv2d channel mismatch: input has {c}, kernel expects {spec.in_channels}")
    if weight.shape != spec.weight_shape:
        raise ShapeError(f"conv2d weight shape {weight.shape} does not match {spec.weight_shape}")
    kh, kw = spec.kernel
    ph, pw = spec.pad
    ho, wo = spec.output_extent(h, w)
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv2d produces an empty output for input {h}x{w} and kernel {kh}x{kw}")
    s = spec.stride
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = _windows(xp, kh, kw, s, ho, wo)
    if spec.depthwise:
        out = np.einsum("nchwij,cij->nchw", win, weight.data[:, 0])
    else:
        out = np.tensordot(win, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1)

    def _backward(g):
        if spec.depthwise:
            gw = np.einsum("nchw,nchwij->cij", g, win)[:, None]
            gcols = np.einsum("nchw,cij->nchwij", g, weight.data[:, 0])
        else:
            gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
            gcols = np.tensordot(g, weight.data, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i : i + s * ho : s, j : j + s * wo : s] += gcols[..., i, j]
        gx = gxp[:, :, ph : ph + h, pw : pw + w]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _record(out, parents, _backward, "depthwise_conv2d" if spec.depthwise else "conv2d")


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    if factor == 1:
        return x
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def _backward(g):
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return _record(out, (x,), _backward, "upsample_nearest")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    out = special.softmax(x.data, axis=axis)

    def _backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _record(out, (x,), _backward, "softmax")


def normalize(x: Tensor, axis, eps: float) -> Tensor:
    """(x - mean) / sqrt(var + eps) over ``axis``, population variance."""
    centered = sub(x, mean(x, axis=axis, keepdims=True))
    var = mean(centered * centered, axis=axis, keepdims=True)
    return centered * power(var + eps, -0.5)


def layer_norm(x: Tensor, weight: Optional[Tensor], bias: Optional[Tensor], axis: int = 1, eps: float = 1e-5) -> Tensor:
    """Normalize each token over its channel axis, then apply the affine."""
    y = normalize(x, axis, eps)
    if weight is not None:
        shape = [1] * x.ndim
        shape[axis] = -1
        y = y * weight.reshape(tuple(shape)) + bias.reshape(tuple(shape))
    return y


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Elementwise binary cross-entropy on logits (log-sum-exp stable)."""
    t = targets.data if isinstance(targets, Tensor) else np.asarray(targets, dtype=logits.dtype)
    out = -(t * special.log_expit(logits.data) + (1.0 - t) * special.log_expit(-logits.data))

    def _backward(g):
        return (g * (special.expit(logits.data) - t),)

    return _record(out, (logits,), _backward, "bce_with_logits")


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, scale: Optional[float] = None) -> Tuple[Tensor, Tensor]:
    """softmax(q k^T / sqrt(d)) v for (N, Lq, d) queries against (N, Lk, d) keys.

    Returns the attended values and the attention weights.
    """
    if k.shape[1] == 0:
        raise ShapeError("attention over an empty key set")
    d = q.shape[-1]
    scale = float(1.0 / np.sqrt(d)) if scale is None else float(scale)
    scores = (q @ k.transpose(0, 2, 1)) * scale
    weights = softmax(scores, axis=-1)
    return weights @ v, weights
