"""Linear local classifiers with sigmoid or tempered-softmax outputs.

A node's input row is ``[x_i, 1, r_i]`` and its scores are that row times the
(d+1+k)×k parameter matrix. Jacobians are returned in output×input layout,
so ``delta @ J`` pulls a row-vector gradient back through the map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CLAMP = 1e-12


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str = "sigmoid"
    tau: float = 1.0

    def __post_init__(self):
        if self.kind not in ("sigmoid", "softmax"):
            raise ValueError(f"unknown classifier kind {self.kind!r}")
        if not self.tau > 0:
            raise ValueError("temperature must be positive")


class ParamMatrix:
    """Classifier weights: rows [0, d) local, row d bias, rows d+1.. relational."""

    def __init__(self, theta, d, k):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (d + 1 + k, k):
            raise ValueError(f"theta must be {(d + 1 + k, k)}, got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta has non-finite entries")
        self.theta = theta
        self.d = d
        self.k = k

    @classmethod
    def zeros(cls, d, k):
        return cls(np.zeros((d + 1 + k, k)), d, k)

    @property
    def theta_x(self):
        return self.theta[:self.d]

    @property
    def bias(self):
        return self.theta[self.d]

    @property
    def theta_r(self):
        return self.theta[self.d + 1:]

    def copy(self):
        return ParamMatrix(self.theta.copy(), self.d, self.k)

    def __repr__(self):
        return f"ParamMatrix(d={self.d}, k={self.k})"


def _check(features, relational, params):
    if features.shape[1] != params.d:
        raise ValueError(f"features have d={features.shape[1]}, params expect {params.d}")
    if relational.shape != (features.shape[0], params.k):
        raise ValueError(f"relational must be {(features.shape[0], params.k)}, "
                         f"got {relational.shape}")


def local_scores(features, params):
    """The relational-free part of the scores, ``X Θ_x + b``."""
    return features @ params.theta_x + params.bias


def activate(spec, scores):
    if spec.kind == "sigmoid":
        # tanh form never overflows
        return 0.5 + 0.5 * np.tanh(0.5 * scores)
    z = scores / spec.tau
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def classifier_forward(spec, features, relational, params, base=None):
    """Class estimates P for every node. ``base`` may carry precomputed local scores."""
    features = np.asarray(features, dtype=np.float64)
    relational = np.asarray(relational, dtype=np.float64)
    _check(features, relational, params)
    if base is None:
        base = local_scores(features, params)
    return activate(spec, base + relational @ params.theta_r)


def activation_jacobian(spec, p_i):
    """∂p/∂scores for one node (k×k, symmetric)."""
    if spec.kind == "sigmoid":
        return np.diag(p_i * (1.0 - p_i))
    return (np.diag(p_i) - np.outer(p_i, p_i)) / spec.tau


def activation_backward(spec, predictions, upstream):
    """Row-wise ``upstream_i · A_i`` without forming the k×k matrices."""
    if spec.kind == "sigmoid":
        return upstream * predictions * (1.0 - predictions)
    inner = np.sum(upstream * predictions, axis=1, keepdims=True)
    return predictions * (upstream - inner) / spec.tau


def classifier_jacobian_relational(spec, p_i, params):
    """∂p_i/∂r_i, a k×k matrix (row = output class, column = relational entry)."""
    return activation_jacobian(spec, np.asarray(p_i, dtype=np.float64)) @ params.theta_r.T


def classifier_param_gradient(spec, features, relational, predictions, upstream):
    """Σ_i [x_i, 1, r_i]ᵀ (upstream_i · A_i), shaped like Θ."""
    u = activation_backward(spec, predictions, upstream)
    return np.vstack([features.T @ u, u.sum(axis=0, keepdims=True), relational.T @ u])


def cross_entropy_loss_and_grad(spec, predictions, labels):
    """Mean cross-entropy and its gradient with respect to the predictions.

    Softmax pairs with multinomial cross-entropy; sigmoid with the one-vs-rest
    binary cross-entropy summed over classes. Probabilities are clamped to
    [1e-12, 1 - 1e-12] first.
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels)
    n, k = predictions.shape
    if labels.shape != (n,):
        raise ValueError(f"labels must have length {n}, got shape {labels.shape}")
    p = np.clip(predictions, CLAMP, 1.0 - CLAMP)
    rows = np.arange(n)
    delta = np.zeros_like(p)
    if spec.kind == "softmax":
        loss = -np.log(p[rows, labels]).sum() / n
        delta[rows, labels] = -1.0 / (n * p[rows, labels])
        return float(loss), delta
    y = np.zeros_like(p)
    y[rows, labels] = 1.0
    loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p)).sum() / n
    delta = (-y / p + (1.0 - y) / (1.0 - p)) / n
    return float(loss), delta


# ---------------------------------------------------------------- serialization

_KIND_CODE = {"sigmoid": 0, "softmax": 1}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}


def save_params(path, params, spec):
    """Write ``d k kind_code`` / ``tau`` / one row of Θ per line (repr floats)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{params.d} {params.k} {_KIND_CODE[spec.kind]}\n")
        fh.write(f"{float(spec.tau)!r}\n")
        for row in params.theta:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_params(path):
    """Inverse of :func:`save_params`; returns ``(params, spec)``."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    try:
        d, k, code = (int(t) for t in lines[0].split())
        tau = float(lines[1])
        theta = np.array([[float(t) for t in ln.split()] for ln in lines[2:]])
    except (IndexError, ValueError) as exc:
        raise ValueError(f"{path}: malformed parameter file ({exc})") from None
    if code not in _CODE_KIND:
        raise ValueError(f"{path}: unknown classifier code {code}")
    return ParamMatrix(theta.reshape(d + 1 + k, k), d, k), ClassifierSpec(_CODE_KIND[code], tau)
