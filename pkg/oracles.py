"""Gradient-check and dense-oracle suites run by ``main.py gradcheck``.

Every suite builds its fixture in 64-bit mode from a fixed seed, so results
are reproducible run to run.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Union

import numpy as np
from loguru import logger

from engine import functional as F
from engine.gradcheck import GradCheckReport, grad_check
from engine.module import Module
from engine.tensor import Tensor, concat, precision
from model.backbone import Backbone
from model.gtem import GlobalTemporalEnhancement
from model.head import DetectionHead
from model.hypergraph import (
    Hypergraph,
    HypergraphConv,
    build_hypergraph,
    dense_hcu_reference,
    dense_propagation_matrix,
    hcu_forward,
)
from model.hypertea import HyperTea
from model.ltem import LocalTemporalEnhancement
from model.tam import TemporalAlignment

GRAD_TOL = 1e-4
GRAD_EPS = 1e-5
ORACLE_TOL = 1e-10
CHANNELS = 4
FRAMES = 2

THREE_VERTEX_FEATURES = np.array([[0.0, 0.0], [1.0, 0.0], [10.0, 10.0]])
THREE_VERTEX_TAU = 2.0


@dataclass
class OracleReport:
    name: str
    tol: float
    max_error: float
    cases: int

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: max_abs_error={self.max_error:.3e} tol={self.tol:.0e} cases={self.cases}"


Report = Union[GradCheckReport, OracleReport]


def _rand(rng: np.random.Generator, *shape: int, scale: float = 1.0) -> Tensor:
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


def _check_module(name: str, module: Module, fn: Callable[[], Tensor], inputs: Sequence[Tensor], max_probes: int = 24) -> GradCheckReport:
    module.eval()
    tensors = list(inputs) + module.parameters()
    return grad_check(lambda *_: fn(), tensors, eps=GRAD_EPS, tol=GRAD_TOL, max_probes=max_probes, name=name)


def three_vertex_hypergraph() -> Hypergraph:
    return build_hypergraph(THREE_VERTEX_FEATURES, THREE_VERTEX_TAU)


def dense_oracle(instances: int = 100, seed: int = 0) -> OracleReport:
    """Sparse HCU against dense matrices, plus row-stochastic propagation."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(1, 65))
        c = int(rng.integers(1, 17))
        x = rng.standard_normal((n, c))
        tau = float(rng.uniform(0.5, 2.0) * np.sqrt(c))
        hg = build_hypergraph(x, tau)
        layer = HypergraphConv(c, rng, tau)
        sparse_out = hcu_forward(Tensor(x), hg, layer.theta).data
        dense_out = dense_hcu_reference(x, hg.dense_incidence(), layer.theta.weight.data, layer.theta.bias.data)
        rows = dense_propagation_matrix(hg.dense_incidence()).sum(axis=1)
        worst = max(worst, float(np.abs(sparse_out - dense_out).max()), float(np.abs(rows - 1.0).max()))
    return OracleReport("hcu_dense_oracle", ORACLE_TOL, worst, instances)


def hcu_suite(seed: int = 0) -> List[Report]:
    rng = np.random.default_rng(seed)
    hg = three_vertex_hypergraph()
    layer = HypergraphConv(2, rng)
    x = _rand(rng, 3, 2)
    fixture = grad_check(
        lambda x_, w, b: hcu_forward(x_, hg, layer.theta),
        [x, layer.theta.weight, layer.theta.bias],
        eps=GRAD_EPS,
        tol=GRAD_TOL,
        name="hcu_three_vertex",
    )
    tokens = HypergraphConv(CHANNELS, rng, tau=2.0)
    grid = _rand(rng, 1, CHANNELS, 4, 4, scale=0.5)
    token_report = _check_module("hcu_tokens", tokens, lambda: tokens.tokens(grid), [grid])
    return [fixture, token_report, dense_oracle(seed=seed)]


def attention_suite(seed: int = 0) -> List[Report]:
    rng = np.random.default_rng(seed)
    q, k, v = _rand(rng, 1, 4, 3), _rand(rng, 1, 4, 3), _rand(rng, 1, 4, 3)
    return [
        grad_check(lambda a, b, c: F.scaled_dot_attention(a, b, c)[0], [q, k, v], GRAD_EPS, GRAD_TOL, name="attention")
    ]


def backbone_suite(seed: int = 0) -> List[Report]:
    rng = np.random.default_rng(seed)
    net = Backbone((4, 4, 4), rng=rng)
    frames = _rand(rng, 1, 1, 8, 8)
    return [_check_module("backbone", net, lambda: net(frames), [frames], max_probes=8)]


def gtem_suite(seed: int = 0) -> List[Report]:
    rng = np.random.default_rng(seed)
    net = GlobalTemporalEnhancement(CHANNELS, FRAMES, rng)
    features = _rand(rng, 1, FRAMES, CHANNELS, 8, 8)
    return [_check_module("gtem", net, lambda: net(features), [features], max_probes=8)]


def ltem_suite(seed: int = 0) -> List[Report]:
    rng = np.random.default_rng(seed)
    net = LocalTemporalEnhancement(CHANNELS, layers=1, patch_size=2, rng=rng)
    features = _rand(rng, 1, FRAMES, CHANNELS, 8, 8)
    return [_check_module("ltem", net, lambda: net(features), [features], max_probes=8)]


def tam_suite(seed: int = 0) -> List[Report]:
    rng = np.random.default_rng(seed)
    net = TemporalAlignment(CHANNELS, patch_size=2, rng=rng)
    global_features = _rand(rng, 1, FRAMES, CHANNELS, 8, 8)
    local_features = _rand(rng, 1, CHANNELS, 8, 8)
    return [
        _check_module(
            "tam", net, lambda: net(global_features, local_features), [global_features, local_features], max_probes=8
        )
    ]


def head_suite(seed: int = 0) -> List[Report]:
    rng = np.random.default_rng(seed)
    net = DetectionHead(CHANNELS, rng=rng)
    features = _rand(rng, 1, CHANNELS, 8, 8)

    def fn() -> Tensor:
        pred = net(features)
        return concat([pred.objectness, pred.classification, pred.regression], axis=1)

    return [_check_module("head", net, fn, [features], max_probes=8)]


def pipeline_suite(seed: int = 0) -> List[Report]:
    rng = np.random.default_rng(seed)
    net = HyperTea(frames=FRAMES, widths=(4, 4, CHANNELS), patch_size=2, seed=seed)
    frames = _rand(rng, 1, FRAMES, 1, 16, 16)

    def fn() -> Tensor:
        pred = net(frames)
        return concat([pred.objectness, pred.classification, pred.regression], axis=1)

    return [_check_module("pipeline", net, fn, [frames], max_probes=3)]


SUITES: Dict[str, Callable[[int], List[Report]]] = {
    "hcu": hcu_suite,
    "attention": attention_suite,
    "backbone": backbone_suite,
    "gtem": gtem_suite,
    "ltem": ltem_suite,
    "tam": tam_suite,
    "head": head_suite,
    "pipeline": pipeline_suite,
}
MODULE_CHOICES = ("all", "hcu", "ltem", "gtem", "tam", "head")


def run_suites(module: str = "all", seed: int = 0) -> List[Report]:
    names = list(SUITES) if module == "all" else [module]
    reports: List[Report] = []
    with precision("float64"):
        for name in names:
            for report in SUITES[name](seed):
                log = logger.info if report.passed else logger.error
                log(report.summary())
                reports.append(report)
    return reports
