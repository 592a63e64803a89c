from __future__ import annotations

from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from engine.tensor import Tensor, get_dtype
from errors import CheckpointError


class Parameter(Tensor):
    __slots__ = ()

    def __init__(self, data):
        super().__init__(data, requires_grad=True)

    def __repr__(self) -> str:
        return f"Parameter(shape={self.shape})"


class Module:
    """Container of parameters, buffers and child modules.

    Attribute order defines the parameter path order, which is what keeps
    initialization and checkpoints deterministic.
    """

    training: bool = True

    def __init__(self):
        self._buffers: Dict[str, np.ndarray] = {}

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = np.asarray(value, dtype=get_dtype())

    def children(self) -> Iterator[Tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield f"{prefix}{name}", value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name, value in self._buffers.items():
            yield f"{prefix}{name}", value
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def astype(self, dtype) -> "Module":
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
        self._buffers = {k: v.astype(dtype) for k, v in self._buffers.items()}
        for _, child in self.children():
            child.astype(dtype)
        return self

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {f"param/{k}": v.data.copy() for k, v in self.named_parameters()}
        state.update({f"buffer/{k}": v.copy() for k, v in self.named_buffers()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> None:
        own = dict(self.named_parameters())
        for key, param in own.items():
            value = state.get(f"param/{key}")
            if value is None:
                if strict:
                    raise CheckpointError(f"missing parameter '{key}' in state")
                continue
            if value.shape != param.shape:
                raise CheckpointError(f"shape mismatch for '{key}': {value.shape} vs {param.shape}")
            param.data = np.array(value, dtype=param.dtype)
        self._load_buffers(state, "", strict)
        if strict:
            known = {f"param/{k}" for k in own} | {f"buffer/{k}" for k, _ in self.named_buffers()}
            unexpected = sorted(k for k in state if k.startswith(("param/", "buffer/")) and k not in known)
            if unexpected:
                raise CheckpointError(f"unexpected keys in state: {unexpected[:5]}")

    def _load_buffers(self, state: Dict[str, np.ndarray], prefix: str, strict: bool) -> None:
        for name in list(self._buffers):
            value = state.get(f"buffer/{prefix}{name}")
            if value is None:
                if strict:
                    raise CheckpointError(f"missing buffer '{prefix}{name}' in state")
                continue
            self._buffers[name] = np.array(value, dtype=self._buffers[name].dtype)
        for name, child in self.children():
            child._load_buffers(state, f"{prefix}{name}.", strict)


class ModuleList(Module):
    def __init__(self, modules: Optional[List[Module]] = None):
        super().__init__()
        for i, module in enumerate(modules or []):
            setattr(self, str(i), module)

    def __iter__(self) -> Iterator[Module]:
        return (m for _, m in self.children())

    def __len__(self) -> int:
        return sum(1 for _ in self.children())

    def __getitem__(self, index: int) -> Module:
        return getattr(self, str(index % len(self)))
