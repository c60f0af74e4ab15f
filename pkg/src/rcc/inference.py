"""Collective prediction: the iterative (ICA/RCC) loop and Gibbs sampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .localclf import classifier_forward, local_scores
from .relfeat import aggregate


@dataclass(frozen=True)
class InferenceConfig:
    T: int = 10
    init: str = "uniform"
    seed: int = 0
    burn_in: int = 100
    samples: int = 1000
    tol: float | None = None  # early stop on max |P(t) - P(t-1)|; None runs all T

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.init not in ("zeros", "uniform"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.burn_in < 0 or self.samples < 1:
            raise ValueError("need burn_in >= 0 and samples >= 1")


@dataclass
class UnrollTrace:
    """P(0)..P(T) and R(1)..R(T); ``relationals[t-1]`` holds R(t)."""

    predictions: list = field(default_factory=list)
    relationals: list = field(default_factory=list)

    @property
    def T(self):
        return len(self.relationals)


def initial_predictions(n, k, init):
    if init == "zeros":
        return np.zeros((n, k))
    return np.full((n, k), 1.0 / k)


def unroll(features, adjacency, spec_f, spec_g, params, T, init="zeros", tol=None):
    """Run R(t) = g(P(t-1)), P(t) = f(X, R(t)) and keep every intermediate."""
    base = local_scores(features, params)
    p = initial_predictions(adjacency.n, params.k, init)
    trace = UnrollTrace([p], [])
    for _ in range(T):
        r = aggregate(spec_g, p, adjacency)
        p_new = classifier_forward(spec_f, features, r, params, base=base)
        trace.relationals.append(r)
        trace.predictions.append(p_new)
        if tol is not None and np.max(np.abs(p_new - p)) < tol:
            break
        p = p_new
    return trace


def ica_predict(graph, spec_f, spec_g, params, config=InferenceConfig()):
    """Iterative classification from local features and links only.

    Returns the final prediction matrix and the full unroll trace.
    """
    trace = unroll(graph.features, graph.adjacency, spec_f, spec_g, params,
                   config.T, config.init, config.tol)
    return trace.predictions[-1], trace


def gibbs_predict(graph, spec_f, spec_g, params, config=InferenceConfig()):
    """Gibbs-sampling collective prediction; returns empirical label frequencies.

    Hard labels start at the argmax of one iteration from ``config.init``;
    nodes are resampled in ascending order, with relational features computed
    from neighbors' one-hot labels. Sigmoid outputs are normalized to a
    distribution before sampling.
    """
    adj = graph.adjacency
    rng = np.random.default_rng(config.seed)
    start = aggregate(spec_g, initial_predictions(adj.n, params.k, config.init), adj)
    labels = hard_labels(classifier_forward(spec_f, graph.features, start, params))
    base = np.ascontiguousarray(local_scores(graph.features, params))
    uniforms = rng.random((config.burn_in + config.samples, adj.n))
    tally = kernels.gibbs_chain(
        adj.indptr, adj.indices, base, np.ascontiguousarray(params.theta_r),
        labels, uniforms, kernels.CLF_CODES[spec_f.kind], float(spec_f.tau),
        kernels.AGG_CODES[spec_g.kind], float(spec_g.tau), config.burn_in)
    return tally / config.samples


def hard_labels(predictions):
    """Row-wise argmax; ties go to the lowest class index."""
    return np.argmax(np.asarray(predictions), axis=1).astype(np.int64)
