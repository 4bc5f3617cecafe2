"""GSC-Net head: neural weighted unit followed by a frozen class-attribute layer.

    x0   = W0 x + b0
    x1   = mask * sigmoid(W1 x + b1)
    xa   = x1 * x0
    yout = W_active^T xa          (W_active: attribute columns of active classes)
    yhat = softmax(yout)

All operations are batched: ``x`` is N x D, one sample per row.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .numerics import DTYPE, ShapeError, ValidationError, sigmoid, softmax
from .semantics import AttributeMatrix, SoftLabelTable

PROB_FLOOR = 1e-12
MODES = ("gsc", "sc")


@dataclass(frozen=True)
class HeadConfig:
    feature_dim: int
    attributes_dim: int
    dropout_keep: float = 0.5
    mode: str = "gsc"

    def __post_init__(self):
        if not 0 < self.dropout_keep <= 1:
            raise ValidationError(f"dropout keep ratio must be in (0, 1], got {self.dropout_keep}")
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}")
        if self.feature_dim < 1 or self.attributes_dim < 1:
            raise ValidationError("feature and attribute dimensions must be positive")


@dataclass
class HeadParameters:
    W0: np.ndarray
    b0: np.ndarray
    W1: np.ndarray
    b1: np.ndarray

    def copy(self) -> "HeadParameters":
        return HeadParameters(*(getattr(self, f.name).copy() for f in fields(self)))

    def tensors(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class Gradients:
    W0: np.ndarray
    b0: np.ndarray
    W1: np.ndarray
    b1: np.ndarray

    def tensors(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class ForwardTrace:
    x: np.ndarray
    mask: np.ndarray
    x0: np.ndarray
    pre1: np.ndarray
    s1: np.ndarray  # sigmoid(pre1) before masking
    x1: np.ndarray
    xa: np.ndarray
    active: np.ndarray
    y_out: np.ndarray
    y_hat: np.ndarray
    params_id: int


def init_parameters(config: HeadConfig, rng: np.random.Generator) -> HeadParameters:
    """Glorot-uniform weights, zero biases."""
    L, D = config.attributes_dim, config.feature_dim
    limit = np.sqrt(6.0 / (D + L))
    W0 = rng.uniform(-limit, limit, size=(L, D))
    W1 = rng.uniform(-limit, limit, size=(L, D))
    return HeadParameters(W0, np.zeros(L), W1, np.zeros(L))


def dropout_mask(rng: np.random.Generator, shape, keep: float) -> np.ndarray:
    """Inverted-dropout mask: 1/keep with probability keep, else 0."""
    if not 0 < keep <= 1:
        raise ValidationError(f"dropout keep ratio must be in (0, 1], got {keep}")
    if keep == 1:
        return np.ones(shape)
    return (rng.random(shape) < keep) / keep


def active_classes(attr: AttributeMatrix, mode: str, training: bool) -> np.ndarray:
    """Output-layer columns: seen only while training in SC mode, else all."""
    if mode == "sc" and training:
        return attr.seen
    return np.arange(attr.n_classes)


def forward(params: HeadParameters, attr: AttributeMatrix, x, mask=None,
            active: np.ndarray | None = None) -> ForwardTrace:
    x = np.atleast_2d(np.asarray(x, dtype=DTYPE))
    L, D = params.W0.shape
    if x.shape[1] != D:
        raise ShapeError(f"features have dimension {x.shape[1]}, head expects {D}")
    if attr.attributes_dim != L:
        raise ShapeError(f"attribute dimension {attr.attributes_dim} != head dimension {L}")
    if mask is None:
        mask = np.ones((x.shape[0], L))
    mask = np.broadcast_to(np.asarray(mask, dtype=DTYPE), (x.shape[0], L))
    if active is None:
        active = np.arange(attr.n_classes)
    x0 = x @ params.W0.T + params.b0
    pre1 = x @ params.W1.T + params.b1
    s1 = sigmoid(pre1)
    x1 = mask * s1
    xa = x1 * x0
    y_out = xa @ attr.columns[:, active]
    return ForwardTrace(x, mask, x0, pre1, s1, x1, xa, np.asarray(active), y_out,
                        softmax(y_out), id(params))


def predict_scores(params: HeadParameters, attr: AttributeMatrix, x) -> np.ndarray:
    """Inference-time class probabilities over all classes (no dropout)."""
    return forward(params, attr, x).y_hat


def cross_entropy(y_hat, target) -> np.ndarray | float:
    """-sum(target * log(y_hat)) along the last axis, probabilities floored at 1e-12."""
    y_hat = np.asarray(y_hat, dtype=DTYPE)
    target = np.asarray(target, dtype=DTYPE)
    if y_hat.shape != target.shape:
        raise ShapeError(f"prediction shape {y_hat.shape} != target shape {target.shape}")
    out = -(target * np.log(np.maximum(y_hat, PROB_FLOOR))).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def one_hot(labels, n: int) -> np.ndarray:
    labels = np.atleast_1d(labels)
    out = np.zeros((labels.size, n))
    out[np.arange(labels.size), labels] = 1.0
    return out


def sle_target(labels, soft_table: SoftLabelTable | None, alpha: float, n: int) -> np.ndarray:
    """Mixed target alpha*onehot + (1-alpha)*soft_row.

    Both parts sum to one, so the SLE loss equals the cross-entropy against
    this mixture, which is what the backward pass differentiates.
    """
    _check_alpha(alpha)
    hard = one_hot(labels, n)
    if soft_table is None or alpha == 1:
        return hard
    soft = soft_table.table[np.atleast_1d(labels)][:, :n]
    return alpha * hard + (1 - alpha) * soft


def sle_loss(y_hat, class_index, soft_table: SoftLabelTable, alpha: float):
    _check_alpha(alpha)
    y_hat = np.asarray(y_hat, dtype=DTYPE)
    n = y_hat.shape[-1]
    labels = np.atleast_1d(class_index)
    hard = cross_entropy(y_hat, one_hot(labels, n).reshape(y_hat.shape))
    soft = cross_entropy(y_hat, soft_table.table[labels][:, :n].reshape(y_hat.shape))
    return alpha * hard + (1 - alpha) * soft


def _check_alpha(alpha):
    if not 0 <= alpha <= 1:
        raise ValidationError(f"alpha must be in [0, 1], got {alpha}")


def batch_loss(trace: ForwardTrace, target: np.ndarray) -> float:
    """Mean cross-entropy of the batch against row targets."""
    return float(np.mean(cross_entropy(trace.y_hat, target)))


def backward(trace: ForwardTrace, attr: AttributeMatrix, target,
             params: HeadParameters | None = None) -> Gradients:
    """Gradients of ``batch_loss`` w.r.t. W0, b0, W1, b1; the attribute layer stays frozen."""
    target = np.atleast_2d(np.asarray(target, dtype=DTYPE))
    if target.shape != trace.y_hat.shape:
        raise ShapeError(f"target shape {target.shape} does not match trace {trace.y_hat.shape}")
    if params is not None and id(params) != trace.params_id:
        raise ValidationError("trace was produced by different parameters")
    n = trace.x.shape[0]
    # softmax + cross-entropy with a target summing to one
    d_out = (trace.y_hat - target) / n
    d_xa = d_out @ attr.columns[:, trace.active].T
    d_x0 = d_xa * trace.x1
    d_pre1 = d_xa * trace.x0 * trace.mask * trace.s1 * (1.0 - trace.s1)
    return Gradients(
        W0=d_x0.T @ trace.x,
        b0=d_x0.sum(axis=0),
        W1=d_pre1.T @ trace.x,
        b1=d_pre1.sum(axis=0),
    )
