from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from engine.module import Parameter
from errors import ShapeError


@dataclass
class OptimizerState:
    momentum_buffer: np.ndarray
    lr: float = 0.01
    momentum: float = 0.937
    weight_decay: float = 5e-4


def sgd_step(param: np.ndarray, grad: np.ndarray, state: OptimizerState) -> Tuple[np.ndarray, OptimizerState]:
    """One SGD-with-momentum update.

    v <- momentum * v + grad + weight_decay * param;  param <- param - lr * v
    """
    if param.shape != grad.shape or param.shape != state.momentum_buffer.shape:
        raise ShapeError(
            f"sgd_step shape mismatch: param {param.shape}, grad {grad.shape}, buffer {state.momentum_buffer.shape}"
        )
    v = state.momentum * state.momentum_buffer + grad + state.weight_decay * param
    new_state = OptimizerState(v, state.lr, state.momentum, state.weight_decay)
    return param - state.lr * v, new_state


def step_drop_lr(step: int, total_steps: int, base_lr: float, factor: float = 0.1, drop_at: float = 0.8) -> float:
    """Single multiplicative drop by ``factor`` once ``drop_at`` of training is done."""
    if total_steps > 0 and step >= int(drop_at * total_steps):
        return base_lr * factor
    return base_lr


@dataclass
class SGD:
    params: Sequence[Parameter]
    lr: float = 0.01
    momentum: float = 0.937
    weight_decay: float = 5e-4
    states: List[OptimizerState] = field(init=False)

    def __post_init__(self):
        self.params = list(self.params)
        self.states = [
            OptimizerState(np.zeros_like(p.data), self.lr, self.momentum, self.weight_decay) for p in self.params
        ]

    def set_lr(self, lr: float) -> None:
        self.lr = lr
        for state in self.states:
            state.lr = lr

    def step(self, grads: Sequence[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ShapeError(f"expected {len(self.params)} gradients, got {len(grads)}")
        for i, (p, g) in enumerate(zip(self.params, grads)):
            p.data, self.states[i] = sgd_step(p.data, g.astype(p.dtype, copy=False), self.states[i])

    def state_dict(self, names: Sequence[str]) -> Dict[str, np.ndarray]:
        return {f"momentum/{name}": s.momentum_buffer.copy() for name, s in zip(names, self.states)}

    def load_state_dict(self, state: Dict[str, np.ndarray], names: Sequence[str]) -> None:
        for i, name in enumerate(names):
            buffer = state.get(f"momentum/{name}")
            if buffer is not None:
                self.states[i].momentum_buffer = np.array(buffer, dtype=self.params[i].dtype)
