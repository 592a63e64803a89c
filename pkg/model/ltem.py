"""Local temporal enhancement: a hypergraph-augmented ConvLSTM scanned over the window.

Inputs are patch-embedded once; the whole recurrence runs on the token grid
and only the top layer's last hidden state is reconstructed to C x H x W.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from engine.layers import Conv2d, PatchEmbed, UpsampleReconstruct
from engine.module import Module, ModuleList
from engine.tensor import Tensor, chunk, concat, sigmoid, tanh
from errors import ShapeError
from model.hypergraph import DEFAULT_TAU, HypergraphConv


@dataclass
class HCCellState:
    cell: Tensor  # C_t
    hidden: Tensor  # H_t

    @classmethod
    def zeros(cls, batch: int, channels: int, height: int, width: int) -> "HCCellState":
        shape = (batch, channels, height, width)
        return cls(Tensor(np.zeros(shape)), Tensor(np.zeros(shape)))


class HCCell(Module):
    def __init__(self, in_channels: int, hidden_channels: int, rng: Optional[np.random.Generator] = None, tau: float = DEFAULT_TAU):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.in_channels = in_channels
        self.hidden_channels = hidden_channels
        self.gates = Conv2d(in_channels + hidden_channels, 4 * hidden_channels, 1, rng)
        self.hcu = HypergraphConv(4 * hidden_channels, rng, tau)
        self.modulation = Conv2d(4 * hidden_channels, 4 * hidden_channels, 1, rng)

    def forward(self, x: Tensor, state: HCCellState) -> HCCellState:
        return hccell_step(x, state, self)


def hccell_step(x: Tensor, state: HCCellState, cell: HCCell) -> HCCellState:
    if x.shape[1] != cell.in_channels:
        raise ShapeError(f"HCCell expects {cell.in_channels} input channels, got {x.shape[1]}")
    if state.hidden.shape[1] != cell.hidden_channels or state.hidden.shape[2:] != x.shape[2:]:
        raise ShapeError(f"state shape {state.hidden.shape} does not match input {x.shape}")
    local = cell.hcu.tokens(cell.gates(concat([x, state.hidden], axis=1)))
    fused = cell.modulation(local) + local
    i, f, o, g = chunk(fused, 4, axis=1)
    i, f, o, g = sigmoid(i), sigmoid(f), sigmoid(o), tanh(g)
    c_next = f * state.cell + i * g
    h_next = o * tanh(c_next)
    return HCCellState(c_next, h_next)


class LocalTemporalEnhancement(Module):
    def __init__(
        self,
        channels: int,
        layers: int = 1,
        patch_size: int = 2,
        rng: Optional[np.random.Generator] = None,
        tau: float = DEFAULT_TAU,
    ):
        super().__init__()
        if layers < 1:
            raise ShapeError(f"LTEM needs at least one layer, got {layers}")
        rng = rng or np.random.default_rng(0)
        self.channels = channels
        self.patch_size = patch_size
        self.embed = PatchEmbed(channels, channels, patch_size, rng)
        self.cells = ModuleList([HCCell(channels, channels, rng, tau) for _ in range(layers)])
        self.reconstruct = UpsampleReconstruct(channels, channels, patch_size, rng)

    def scan(self, features: Tensor) -> List[HCCellState]:
        """Run every layer over t = 1..T and return each layer's final state."""
        n, t, c, h, w = features.shape
        tokens = self.embed(features.reshape(n * t, c, h, w))
        gh, gw = tokens.shape[2:]
        tokens = tokens.reshape(n, t, self.channels, gh, gw)
        inputs = [tokens[:, step] for step in range(t)]
        finals = []
        for cell in self.cells:
            state = HCCellState.zeros(n, self.channels, gh, gw)
            outputs = []
            for x in inputs:
                state = cell(x, state)
                outputs.append(state.hidden)
            finals.append(state)
            inputs = outputs
        return finals

    def forward(self, features: Tensor) -> Tensor:
        """(N, T, C, H, W) -> L_st: (N, C, H, W)."""
        h, w = features.shape[3:]
        ps = self.patch_size
        if h % ps or w % ps:
            raise ShapeError(f"feature extent {h}x{w} is not divisible by patch size {ps}")
        top = self.scan(features)[-1]
        return self.reconstruct(top.hidden, target_extent=(h, w))
