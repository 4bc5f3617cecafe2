"""Dense float64 primitives shared by every other module.

Matrices are plain C-ordered ``numpy.ndarray`` objects of dtype float64.
Randomness always flows through an explicit ``numpy.random.Generator``;
nothing here touches global RNG state.
"""
from __future__ import annotations

import numpy as np

DTYPE = np.float64


class ValidationError(ValueError):
    """Input violates a documented precondition."""

    kind = "validation"


class ShapeError(ValidationError):
    kind = "shape"


def make_rng(seed: int) -> np.random.Generator:
    """Seeded random source. Same seed, same stream."""
    if seed < 0 or seed >= 2**64:
        raise ValidationError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(int(seed)))


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.ascontiguousarray(a, dtype=DTYPE)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    check_finite(m, name)
    return m


def check_finite(a: np.ndarray, name: str = "array") -> None:
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} contains NaN or Inf")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def sigmoid(v) -> np.ndarray:
    v = np.asarray(v, dtype=DTYPE)
    # exp of a non-positive argument only, so neither branch overflows
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softmax(v) -> np.ndarray:
    """Softmax along the last axis with max-subtraction."""
    v = np.asarray(v, dtype=DTYPE)
    if v.size == 0 or v.shape[-1] == 0:
        raise ValidationError("softmax of an empty vector")
    z = v - v.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def euclidean_distance_matrix(points) -> np.ndarray:
    """Pairwise Euclidean distances between the rows of ``points``."""
    p = as_matrix(points, "points")
    sq = squared_distance_matrix(p)
    return np.sqrt(sq)


def squared_distance_matrix(points: np.ndarray) -> np.ndarray:
    p = np.asarray(points, dtype=DTYPE)
    # broadcasting difference rather than the |a|^2+|b|^2-2ab trick:
    # exact zeros on the diagonal and no cancellation for near points
    diff = p[:, None, :] - p[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)
