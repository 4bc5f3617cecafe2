"""Class attribute matrix, self-tuning class affinity and soft labels."""
from __future__ import annotations

from dataclasses import dataclass, field
import hashlib

import numpy as np

from .numerics import DTYPE, ValidationError, as_matrix, squared_distance_matrix


@dataclass(frozen=True)
class AttributeMatrix:
    """L x n_c class attribute matrix, seen classes in the first ``n_seen`` columns."""

    columns: np.ndarray
    n_seen: int
    class_names: tuple[str, ...] = ()
    raw: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        cols = as_matrix(self.columns, "attribute matrix")
        object.__setattr__(self, "columns", cols)
        n_c = cols.shape[1]
        if not 1 <= self.n_seen <= n_c:
            raise ValidationError(f"n_seen={self.n_seen} outside [1, {n_c}]")
        if not self.class_names:
            names = tuple(f"class{j:04d}" for j in range(n_c))
            object.__setattr__(self, "class_names", names)
        if len(self.class_names) != n_c:
            raise ValidationError(
                f"{len(self.class_names)} class names for {n_c} columns")
        if len(set(self.class_names)) != n_c:
            raise ValidationError("class names are not unique")
        if self.raw is None:
            object.__setattr__(self, "raw", cols)

    @property
    def attributes_dim(self) -> int:
        return self.columns.shape[0]

    @property
    def n_classes(self) -> int:
        return self.columns.shape[1]

    @property
    def n_unseen(self) -> int:
        return self.n_classes - self.n_seen

    @property
    def seen(self) -> np.ndarray:
        return np.arange(self.n_seen)

    @property
    def unseen(self) -> np.ndarray:
        return np.arange(self.n_seen, self.n_classes)

    def is_seen(self, c: int) -> bool:
        return 0 <= c < self.n_seen

    def class_vectors(self) -> np.ndarray:
        """One class per row (n_c x L)."""
        return np.ascontiguousarray(self.columns.T)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.int64(self.n_seen).tobytes())
        h.update(np.ascontiguousarray(self.columns, dtype="<f8").tobytes())
        return h.hexdigest()


def column_normalize_attributes(attr: AttributeMatrix) -> AttributeMatrix:
    """Scale every class column to unit Euclidean norm; the raw matrix is kept."""
    norms = np.linalg.norm(attr.columns, axis=0)
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        raise ValidationError(
            f"zero-norm attribute column for class {attr.class_names[bad[0]]!r}")
    return AttributeMatrix(attr.columns / norms, attr.n_seen, attr.class_names,
                           raw=attr.raw)


@dataclass(frozen=True)
class NeighborRule:
    """Which class pairs keep a nonzero affinity.

    ``mode`` is ``"all"``, ``"knn"`` (the ``k`` nearest other classes plus
    self) or ``"threshold"`` (pairs with distance <= ``epsilon``).
    """

    mode: str = "all"
    k: int = 0
    epsilon: float = 0.0

    def __post_init__(self):
        if self.mode not in ("all", "knn", "threshold"):
            raise ValidationError(f"unknown neighbor mode {self.mode!r}")
        if self.mode == "knn" and self.k < 1:
            raise ValidationError("knn neighbor rule needs k >= 1")
        if self.mode == "threshold" and self.epsilon < 0:
            raise ValidationError("threshold neighbor rule needs epsilon >= 0")

    def mask(self, dist: np.ndarray) -> np.ndarray:
        n = dist.shape[0]
        if self.mode == "all":
            return np.ones((n, n), dtype=bool)
        if self.mode == "threshold":
            return dist <= self.epsilon
        keep = np.zeros((n, n), dtype=bool)
        order = _neighbor_order(dist)
        for i in range(n):
            keep[i, i] = True
            keep[i, order[i, : self.k]] = True
        return keep


@dataclass(frozen=True)
class AffinityGraph:
    affinity: np.ndarray
    beta: float
    k_scale: int
    neighbor_rule: NeighborRule


@dataclass(frozen=True)
class SoftLabelTable:
    table: np.ndarray

    def row(self, c: int) -> np.ndarray:
        return self.table[c]


def _neighbor_order(dist: np.ndarray) -> np.ndarray:
    """For each row, the other indices sorted by distance (stable on ties)."""
    n = dist.shape[0]
    d = dist.copy()
    d[np.arange(n), np.arange(n)] = np.inf
    return np.argsort(d, axis=1, kind="stable")[:, : n - 1]


def local_scale(points, k_scale: int) -> np.ndarray:
    """Distance from each point to its k-th nearest other point."""
    p = as_matrix(points, "points")
    n = p.shape[0]
    if not 1 <= k_scale < n:
        raise ValidationError(f"k_scale={k_scale} needs 1 <= k < n_points={n}")
    dist = np.sqrt(squared_distance_matrix(p))
    order = _neighbor_order(dist)
    kth = order[:, k_scale - 1]
    h = dist[np.arange(n), kth]
    zero = np.flatnonzero(h == 0)
    if zero.size:
        i = int(zero[0])
        raise ValidationError(
            f"local scale of point {i} is zero: duplicates point {int(kth[i])}")
    return h


def build_affinity(attr: AttributeMatrix, beta: float = 1.4, k_scale: int = 7,
                   neighbor_rule: NeighborRule | None = None) -> AffinityGraph:
    """Self-tuning Gaussian affinity between class vectors.

    ``A_ij = exp(-beta * |w_i - w_j|^2 / (h_i * h_j))`` on neighbor pairs,
    0 elsewhere, with ``h`` the k-th-neighbor local scale.
    """
    if not beta > 0:
        raise ValidationError(f"beta must be positive, got {beta}")
    rule = neighbor_rule or NeighborRule()
    pts = attr.class_vectors()
    h = local_scale(pts, k_scale)
    sq = squared_distance_matrix(pts)
    a = np.exp(-beta * sq / np.outer(h, h))
    a[~rule.mask(np.sqrt(sq))] = 0.0
    return AffinityGraph(a, float(beta), int(k_scale), rule)


def row_normalize(graph: AffinityGraph | np.ndarray) -> SoftLabelTable:
    a = graph.affinity if isinstance(graph, AffinityGraph) else np.asarray(graph, DTYPE)
    s = a.sum(axis=1)
    bad = np.flatnonzero(~(s > 0))
    if bad.size:
        raise ValidationError(f"affinity row {int(bad[0])} has zero sum")
    return SoftLabelTable(a / s[:, None])


def soft_labels(attr: AttributeMatrix, beta: float = 1.4, k_scale: int = 7,
                neighbor_rule: NeighborRule | None = None) -> SoftLabelTable:
    return row_normalize(build_affinity(attr, beta, k_scale, neighbor_rule))


def restrict(attr: AttributeMatrix, classes: np.ndarray) -> AttributeMatrix:
    """Sub-matrix over ``classes`` (all treated as seen)."""
    classes = np.asarray(classes)
    return AttributeMatrix(attr.columns[:, classes], len(classes),
                           tuple(attr.class_names[c] for c in classes),
                           raw=attr.raw[:, classes])
