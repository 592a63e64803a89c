"""Distance-based hypergraphs and the hypergraph convolution unit (HCU).

Every vertex v spawns one hyperedge e_v = {u : ||x_u - x_v|| <= tau}. The
incidence matrix is kept sparse (CSR, one row of memberships per vertex);
propagation is P = Dv^-1 H De^-1 H^T applied as two sparse products.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.spatial.distance import cdist

from engine.layers import Linear
from engine.module import Module
from engine.tensor import Tensor, _record, concat
from errors import NonFiniteError, ShapeError

DEFAULT_TAU = 8.0


@dataclass(frozen=True)
class Hypergraph:
    incidence: sparse.csr_matrix  # N x M, 0/1
    vertex_degree: np.ndarray  # length N
    edge_degree: np.ndarray  # length M
    tau: float

    @property
    def n_vertices(self) -> int:
        return self.incidence.shape[0]

    @property
    def n_edges(self) -> int:
        return self.incidence.shape[1]

    def dense_incidence(self) -> np.ndarray:
        return self.incidence.toarray()

    def propagate(self, x: np.ndarray) -> np.ndarray:
        """P @ x: vertices -> hyperedges (mean), hyperedges -> vertices (mean)."""
        h = self.incidence
        edges = (h.T @ x) / self.edge_degree[:, None]
        return (h @ edges) / self.vertex_degree[:, None]

    def propagate_transpose(self, g: np.ndarray) -> np.ndarray:
        """P^T @ g, the reverse of ``propagate``."""
        h = self.incidence
        edges = (h.T @ (g / self.vertex_degree[:, None])) / self.edge_degree[:, None]
        return h @ edges

    def dump(self, path: Path) -> Path:
        """Write H, Dv and De as plain-text matrices for fixture inspection."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"# hypergraph N={self.n_vertices} M={self.n_edges} tau={self.tau}\n# H\n")
            np.savetxt(f, self.dense_incidence(), fmt="%d")
            f.write("# Dv\n")
            np.savetxt(f, self.vertex_degree[None, :], fmt="%d")
            f.write("# De\n")
            np.savetxt(f, self.edge_degree[None, :], fmt="%d")
        return path


def build_hypergraph(features: np.ndarray, tau: float = DEFAULT_TAU) -> Hypergraph:
    """epsilon-ball hypergraph over the rows of an N x C feature matrix."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 1:
        raise ShapeError(f"build_hypergraph expects an N x C matrix with N >= 1, got {features.shape}")
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    if not np.all(np.isfinite(features)):
        raise NonFiniteError("hypergraph features contain NaN/Inf", op="build_hypergraph")
    n = features.shape[0]
    distances = cdist(features, features)
    members = distances <= tau
    # column v is hyperedge e_v; row u lists the hyperedges containing u
    incidence = sparse.csr_matrix(members.astype(np.float64))
    incidence.sort_indices()
    vertex_degree = np.asarray(incidence.sum(axis=1)).reshape(n)
    edge_degree = np.asarray(incidence.sum(axis=0)).reshape(n)
    return Hypergraph(incidence, vertex_degree, edge_degree, float(tau))


def hypergraph_propagate(x: Tensor, hg: Hypergraph) -> Tensor:
    """Differentiable P @ x with the hypergraph treated as a constant."""
    if x.ndim != 2 or x.shape[0] != hg.n_vertices:
        raise ShapeError(f"hypergraph has {hg.n_vertices} vertices, features have shape {x.shape}")
    out = hg.propagate(x.data).astype(x.dtype, copy=False)

    def _backward(g):
        return (hg.propagate_transpose(g).astype(g.dtype, copy=False),)

    return _record(out, (x,), _backward, "hypergraph_propagate")


class HypergraphConv(Module):
    """HCU: X + Dv^-1 H De^-1 H^T (X Theta + b), with Theta a square FC layer."""

    def __init__(self, channels: int, rng: Optional[np.random.Generator] = None, tau: float = DEFAULT_TAU):
        super().__init__()
        self.tau = tau
        self.theta = Linear(channels, channels, rng)

    def forward(self, x: Tensor, hg: Hypergraph) -> Tensor:
        return hcu_forward(x, hg, self.theta)

    def tokens(self, x: Tensor) -> Tensor:
        return hcu_tokens(x, self.tau, self.theta)


def hcu_forward(x: Tensor, hg: Hypergraph, theta: Linear) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"hcu_forward expects N x C features, got {x.shape}")
    if theta.weight.shape != (x.shape[1], x.shape[1]):
        raise ShapeError(f"Theta has shape {theta.weight.shape}, features have {x.shape[1]} channels")
    return x + hypergraph_propagate(theta(x), hg)


def hcu_tokens(x: Tensor, tau: float, theta: Linear) -> Tensor:
    """Treat every spatial position of each C x h x w map as a vertex.

    A hypergraph is built per batch item from the current (detached) features.
    """
    n, c, h, w = x.shape
    vertices = x.reshape(n, c, h * w).transpose(0, 2, 1)
    outputs = []
    for i in range(n):
        item = vertices[i]
        hg = build_hypergraph(item.data, tau)
        outputs.append(hcu_forward(item, hg, theta))
    stacked = outputs[0].reshape(1, h * w, c) if n == 1 else concat([o.reshape(1, h * w, c) for o in outputs], axis=0)
    return stacked.transpose(0, 2, 1).reshape(n, c, h, w)


def dense_hcu_reference(x: np.ndarray, incidence: np.ndarray, theta: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """The HCU evaluated with dense matrices; oracle for the sparse path."""
    h = np.asarray(incidence, dtype=np.float64)
    dv_inv = np.diag(1.0 / h.sum(axis=1))
    de_inv = np.diag(1.0 / h.sum(axis=0))
    p = dv_inv @ h @ de_inv @ h.T
    return x + p @ (x @ theta + bias)


def dense_propagation_matrix(incidence: np.ndarray) -> np.ndarray:
    h = np.asarray(incidence, dtype=np.float64)
    return np.diag(1.0 / h.sum(axis=1)) @ h @ np.diag(1.0 / h.sum(axis=0)) @ h.T
