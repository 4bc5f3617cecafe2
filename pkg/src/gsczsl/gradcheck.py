"""Central finite-difference check of the hand-derived backward pass."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as M
from .numerics import make_rng
from .semantics import AttributeMatrix, column_normalize_attributes, soft_labels

STEP = 1e-6
TOLERANCE = 1e-5
# coordinates whose true gradient is this small are compared absolutely
ABS_FLOOR = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), ABS_FLOOR)
    return np.abs(analytic - numeric) / denom


def numeric_gradient(loss_fn, params: M.HeadParameters, step: float = STEP) -> dict[str, np.ndarray]:
    """d loss / d theta by central differences, one coordinate at a time."""
    out = {}
    for name, tensor in params.tensors().items():
        g = np.zeros_like(tensor)
        flat = tensor.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_fn(params)
            flat[i] = orig - step
            down = loss_fn(params)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
        out[name] = g
    return out


@dataclass
class GradCheckResult:
    eta: float
    max_rel_error: float
    worst: str

    @property
    def ok(self) -> bool:
        return self.max_rel_error <= TOLERANCE


def random_instance(rng: np.random.Generator, D=10, L=6, n_tr=5, n_ts=3, batch=4):
    attr = column_normalize_attributes(AttributeMatrix(rng.uniform(0.1, 1.0, (L, n_tr + n_ts)), n_tr))
    params = M.HeadParameters(rng.normal(0, 0.5, (L, D)), rng.normal(0, 0.1, L),
                              rng.normal(0, 0.5, (L, D)), rng.normal(0, 0.1, L))
    x = rng.normal(0, 1, (batch, D))
    labels = rng.integers(0, n_tr, batch)
    return attr, params, x, labels


def check_sle_gradients(seed: int = 1, eta: float = 1.0, alpha: float = 0.5, mode: str = "gsc",
                        D=10, L=6, n_tr=5, n_ts=3, batch=4) -> GradCheckResult:
    """Compare ``backward`` with finite differences of the SLE loss on a random instance.

    The dropout mask is drawn once and held fixed while differencing.
    """
    rng = make_rng(seed)
    attr, params, x, labels = random_instance(rng, D, L, n_tr, n_ts, batch)
    active = M.active_classes(attr, mode, training=True)
    soft = soft_labels(attr, beta=1.4, k_scale=2) if mode == "gsc" else None
    mask = M.dropout_mask(rng, (batch, L), eta)

    def loss(p):
        y_hat = M.forward(p, attr, x, mask, active).y_hat
        if soft is None:
            return float(np.mean(M.cross_entropy(y_hat, M.one_hot(labels, len(active)))))
        return float(np.mean(M.sle_loss(y_hat, labels, soft, alpha)))

    trace = M.forward(params, attr, x, mask, active)
    target = M.sle_target(labels, soft, alpha if soft is not None else 1.0, len(active))
    analytic = M.backward(trace, attr, target, params).tensors()
    numeric = numeric_gradient(loss, params)
    worst, worst_name = 0.0, ""
    for name in analytic:
        err = relative_error(analytic[name], numeric[name])
        i = int(np.argmax(err))
        if err.flat[i] > worst:
            worst, worst_name = float(err.flat[i]), f"{name}[{np.unravel_index(i, err.shape)}]"
    return GradCheckResult(eta, worst, worst_name)


def run_suite(seed: int = 1) -> list[GradCheckResult]:
    return [check_sle_gradients(seed, eta=1.0), check_sle_gradients(seed, eta=0.5),
            check_sle_gradients(seed, eta=0.5, mode="sc")]
