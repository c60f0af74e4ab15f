"""Relational features: neighbor aggregates of the current predictions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True)
class AggregatorSpec:
    kind: str = "proportion"
    tau: float = 0.5

    def __post_init__(self):
        if self.kind not in ("sum", "proportion", "mode"):
            raise ValueError(f"unknown aggregator kind {self.kind!r}")
        if not self.tau > 0:
            raise ValueError("temperature must be positive")


def _inv_degree(adjacency):
    return adjacency.inverse_degrees[:, None]


def aggregate(spec, predictions, adjacency):
    """Relational matrix R (n×k). Isolated nodes get an all-zero row for every kind."""
    predictions = np.ascontiguousarray(predictions, dtype=np.float64)
    if predictions.shape[0] != adjacency.n:
        raise ValueError("predictions and adjacency disagree on n")
    total = kernels.neighbor_sum(adjacency.indptr, adjacency.indices, predictions)
    if spec.kind == "sum":
        return total
    if spec.kind == "proportion":
        return total * _inv_degree(adjacency)
    z = total / spec.tau
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    r = e / e.sum(axis=1, keepdims=True)
    r[adjacency.degrees == 0] = 0.0
    return r


def aggregate_backward(spec, relational, upstream, adjacency):
    """Pull ∂L/∂R back to ∂L/∂P through the aggregator (sparse, symmetric adjacency)."""
    if spec.kind == "sum":
        h = upstream
    elif spec.kind == "proportion":
        h = upstream * _inv_degree(adjacency)
    else:
        inner = np.sum(upstream * relational, axis=1, keepdims=True)
        h = relational * (upstream - inner) / spec.tau
    # Δ_j = Σ_{i ∈ N(j)} h_i  (adjacency is symmetric)
    return kernels.neighbor_sum(adjacency.indptr, adjacency.indices,
                                np.ascontiguousarray(h))


def aggregator_jacobian_block(spec, i, j, predictions, adjacency, r_i):
    """∂r_i/∂p_j for an edge (i, j) as a k×k matrix."""
    if not adjacency.has_edge(i, j):
        raise ValueError(f"({i}, {j}) is not an edge")
    k = np.asarray(predictions).shape[1]
    if spec.kind == "sum":
        return np.eye(k)
    if spec.kind == "proportion":
        return np.eye(k) / adjacency.degrees[i]
    r_i = np.asarray(r_i, dtype=np.float64)
    return (np.diag(r_i) - np.outer(r_i, r_i)) / spec.tau
