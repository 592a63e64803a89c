from engine.tensor import (
    Tensor,
    backward,
    concat,
    chunk,
    get_dtype,
    no_grad,
    precision,
    set_precision,
    stack,
)

__all__ = [
    "Tensor",
    "backward",
    "concat",
    "chunk",
    "get_dtype",
    "no_grad",
    "precision",
    "set_precision",
    "stack",
]
