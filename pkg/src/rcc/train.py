"""Training: back-propagation through the unrolled prediction loop, the
true-label ICA baseline, a local-only baseline, and adagrad.

All trainers start from Θ = 0 and minimize the node-averaged cross-entropy
plus (λ/2)‖Θ‖² with the bias row left unpenalized.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .inference import UnrollTrace, unroll
from .localclf import (ParamMatrix, activation_backward, classifier_forward,
                       classifier_param_gradient, cross_entropy_loss_and_grad)
from .relfeat import aggregate, aggregate_backward

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """The objective became non-finite during optimization."""


@dataclass(frozen=True)
class TrainConfig:
    T: int = 10
    eta: float = 0.1
    iterations: int = 500
    lam: float = 1e-3
    seed: int = 0
    adagrad_epsilon: float = 1e-8

    def __post_init__(self):
        if self.T < 1 or self.iterations < 0:
            raise ValueError("T must be >= 1 and iterations >= 0")
        if self.eta <= 0 or self.lam < 0 or self.adagrad_epsilon <= 0:
            raise ValueError("eta and adagrad_epsilon must be positive, lam non-negative")


def _penalty_mask(params):
    mask = np.ones_like(params.theta)
    mask[params.d] = 0.0
    return mask


def regularizer(params, lam):
    w = params.theta * _penalty_mask(params)
    return 0.5 * lam * float(np.sum(w * w)), lam * w


# ---------------------------------------------------------------- RCC

def rcc_backprop(trace, delta_T, graph, spec_f, spec_g, params):
    """Loss gradients Δ(t) = ∂L/∂P(t) for t = 1..T, returned in ascending t.

    Each step maps δ_i(t) through f′(r_i(t)) (node-local) and then through the
    aggregator's edge blocks into δ_j(t-1); nothing denser than n×k is formed.
    """
    T = trace.T
    if len(trace.predictions) != T + 1:
        raise ValueError("trace must hold T+1 prediction matrices")
    n, k = trace.predictions[-1].shape
    if k != params.k or n != graph.n or np.shape(delta_T) != (n, k):
        raise ValueError("trace, graph, params and delta_T disagree on shapes")
    deltas = [None] * T
    deltas[T - 1] = np.asarray(delta_T, dtype=np.float64)
    theta_r_t = params.theta_r.T
    for t in range(T, 1, -1):
        u = activation_backward(spec_f, trace.predictions[t], deltas[t - 1])
        d_rel = u @ theta_r_t
        deltas[t - 2] = aggregate_backward(spec_g, trace.relationals[t - 1], d_rel,
                                           graph.adjacency)
    return deltas


def rcc_parameter_gradient(trace, deltas, graph, spec_f, spec_g, params, lam):
    """Σ_t Δ(t) f′_(t)(Θ) plus the L2 term."""
    grad = np.zeros_like(params.theta)
    for t in range(1, trace.T + 1):
        grad += classifier_param_gradient(spec_f, graph.features, trace.relationals[t - 1],
                                          trace.predictions[t], deltas[t - 1])
    return grad + regularizer(params, lam)[1]


def rcc_loss(params, graph, labels, spec_f, spec_g, T, lam=0.0):
    trace = unroll(graph.features, graph.adjacency, spec_f, spec_g, params, T, "zeros")
    loss, _ = cross_entropy_loss_and_grad(spec_f, trace.predictions[-1], labels)
    return loss + regularizer(params, lam)[0]


def rcc_loss_and_grad(params, graph, labels, spec_f, spec_g, T, lam):
    """Objective and gradient of the T-step unrolled prediction started from P(0) = 0."""
    trace = unroll(graph.features, graph.adjacency, spec_f, spec_g, params, T, "zeros")
    loss, delta_T = cross_entropy_loss_and_grad(spec_f, trace.predictions[-1], labels)
    deltas = rcc_backprop(trace, delta_T, graph, spec_f, spec_g, params)
    grad = rcc_parameter_gradient(trace, deltas, graph, spec_f, spec_g, params, lam)
    return loss + regularizer(params, lam)[0], grad


# ---------------------------------------------------------------- baselines

def one_hot(labels, k):
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def fixed_input_loss_and_grad(params, features, relational, labels, spec_f, lam,
                              relational_free=True):
    """Loss of a single classification pass with fixed relational inputs.

    With ``relational_free=False`` the Θ_r gradient is zeroed (local-only model).
    """
    p = classifier_forward(spec_f, features, relational, params)
    loss, delta = cross_entropy_loss_and_grad(spec_f, p, labels)
    grad = classifier_param_gradient(spec_f, features, relational, p, delta)
    reg, reg_grad = regularizer(params, lam)
    grad = grad + reg_grad
    if not relational_free:
        grad[params.d + 1:] = 0.0
    return loss + reg, grad


def adagrad_fit(loss_grad_fn, d, k, config):
    """Adagrad from Θ = 0: Θ ← Θ − η g / (ε + sqrt(Σ g²)).

    ``loss_grad_fn(params)`` returns ``(loss, grad)``. Returns the final
    parameters and the loss recorded before each step.
    """
    params = ParamMatrix.zeros(d, k)
    accum = np.zeros_like(params.theta)
    history = []
    for step in range(config.iterations):
        loss, grad = loss_grad_fn(params)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise TrainingDiverged(f"non-finite objective at step {step} (loss={loss})")
        history.append(loss)
        accum += grad * grad
        params = ParamMatrix(
            params.theta - config.eta * grad / (config.adagrad_epsilon + np.sqrt(accum)), d, k)
    return params, history


def train_rcc(graph, labels, spec_f, spec_g, config):
    k = graph.num_classes
    return adagrad_fit(
        lambda p: rcc_loss_and_grad(p, graph, labels, spec_f, spec_g, config.T, config.lam),
        graph.d, k, config)


def true_label_relational(graph, labels, spec_g):
    return aggregate(spec_g, one_hot(labels, graph.num_classes), graph.adjacency)


def train_ica_baseline(graph, labels, spec_f, spec_g, config):
    """Fit Θ with relational inputs R̂ = g(one-hot true labels) held fixed."""
    r_hat = true_label_relational(graph, labels, spec_g)
    return adagrad_fit(
        lambda p: fixed_input_loss_and_grad(p, graph.features, r_hat, labels, spec_f,
                                            config.lam),
        graph.d, graph.num_classes, config)


def train_local(graph, labels, spec_f, config):
    """Local-only classifier: Θ_r is pinned at zero."""
    zero_r = np.zeros((graph.n, graph.num_classes))
    return adagrad_fit(
        lambda p: fixed_input_loss_and_grad(p, graph.features, zero_r, labels, spec_f,
                                            config.lam, relational_free=False),
        graph.d, graph.num_classes, config)


# ---------------------------------------------------------------- diagnostics

def numeric_gradient(fn, params, step=1e-6):
    """Central differences of a scalar function of Θ, coordinate by coordinate."""
    grad = np.zeros_like(params.theta)
    for idx in np.ndindex(params.theta.shape):
        plus = params.theta.copy()
        minus = params.theta.copy()
        plus[idx] += step
        minus[idx] -= step
        grad[idx] = (fn(ParamMatrix(plus, params.d, params.k))
                     - fn(ParamMatrix(minus, params.d, params.k))) / (2 * step)
    return grad


def finite_difference_check(graph, labels, spec_f, spec_g, params, T, step=1e-6, lam=0.0):
    """Max over Θ entries of |analytic − numeric| / max(1, |numeric|) for the RCC gradient."""
    _, analytic = rcc_loss_and_grad(params, graph, labels, spec_f, spec_g, T, lam)
    numeric = numeric_gradient(
        lambda p: rcc_loss(p, graph, labels, spec_f, spec_g, T, lam), params, step)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))


def loss_cross_section(theta_a, theta_b, alphas, graph, labels, spec_f, spec_g, T, lam=0.0):
    """Unrolled objective along Θ_a + α(Θ_b − Θ_a); returns ``[(alpha, loss), ...]``."""
    if theta_a.theta.shape != theta_b.theta.shape:
        raise ValueError("parameter shapes differ")
    out = []
    for a in alphas:
        p = ParamMatrix(theta_a.theta + a * (theta_b.theta - theta_a.theta),
                        theta_a.d, theta_a.k)
        out.append((float(a), rcc_loss(p, graph, labels, spec_f, spec_g, T, lam)))
    return out


__all__ = [
    "TrainConfig", "TrainingDiverged", "UnrollTrace", "rcc_backprop",
    "rcc_parameter_gradient", "rcc_loss", "rcc_loss_and_grad", "adagrad_fit",
    "train_rcc", "train_ica_baseline", "train_local", "true_label_relational",
    "finite_difference_check", "numeric_gradient", "loss_cross_section", "one_hot",
    "regularizer",
]
