"""Central-difference gradient checking in 64-bit mode."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Sequence

import numpy as np

from engine.tensor import Tensor, backward, no_grad
from errors import GradCheckError

REL_ERROR_FLOOR = 1e-4


@dataclass
class InputReport:
    index: int
    shape: tuple
    probes: int
    max_rel_error: float
    mean_rel_error: float


@dataclass
class GradCheckReport:
    name: str
    tol: float
    eps: float
    inputs: List[InputReport] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((r.max_rel_error for r in self.inputs), default=0.0)

    @property
    def mean_rel_error(self) -> float:
        total = sum(r.mean_rel_error * r.probes for r in self.inputs)
        count = sum(r.probes for r in self.inputs)
        return total / count if count else 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        probes = sum(r.probes for r in self.inputs)
        return (
            f"{status} {self.name}: max_rel={self.max_rel_error:.3e} mean_rel={self.mean_rel_error:.3e} "
            f"tol={self.tol:.0e} probes={probes}"
        )


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_ERROR_FLOOR) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def grad_check(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
    tol: float = 1e-4,
    max_probes: int = 24,
    seed: int = 0,
    name: str = "fn",
) -> GradCheckReport:
    """Compare reverse-mode gradients of ``fn(*inputs)`` against central differences.

    The output is reduced to a scalar through a fixed random projection.
    Inputs with more than ``max_probes`` elements are probed at a seeded
    random subset of positions.
    """
    for x in inputs:
        if x.dtype != np.float64:
            raise GradCheckError(f"grad_check needs 64-bit inputs, got {x.dtype}")
    first = fn(*inputs)
    second = fn(*inputs)
    if first.shape != second.shape or not np.array_equal(first.data, second.data):
        raise GradCheckError(f"{name} is not deterministic: two evaluations differ")

    rng = np.random.default_rng(seed)
    projection = rng.standard_normal(first.shape)

    def objective() -> float:
        with no_grad():
            return float(np.sum(fn(*inputs).data * projection))

    loss = (fn(*inputs) * Tensor(projection)).sum()
    analytic = backward(loss, inputs)

    report = GradCheckReport(name=name, tol=tol, eps=eps)
    for i, (x, grad) in enumerate(zip(inputs, analytic)):
        x.data = np.ascontiguousarray(x.data)
        flat = x.data.reshape(-1)
        if flat.size <= max_probes:
            positions = np.arange(flat.size)
        else:
            positions = np.sort(rng.choice(flat.size, size=max_probes, replace=False))
        numeric = np.empty(positions.size)
        for j, pos in enumerate(positions):
            original = flat[pos]
            flat[pos] = original + eps
            f_plus = objective()
            flat[pos] = original - eps
            f_minus = objective()
            flat[pos] = original
            numeric[j] = (f_plus - f_minus) / (2 * eps)
        errors = relative_error(grad.reshape(-1)[positions], numeric)
        report.inputs.append(
            InputReport(
                index=i,
                shape=x.shape,
                probes=int(positions.size),
                max_rel_error=float(errors.max(initial=0.0)),
                mean_rel_error=float(errors.mean()) if errors.size else 0.0,
            )
        )
    return report
