"""ZSL / GZSL prediction, parametric novelty detection and reporting.

Scores passed to the PND rule are post-softmax probabilities; the rule is
not invariant to the softmax for gamma > 1.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .numerics import ValidationError


@dataclass(frozen=True)
class ClassPartition:
    seen: np.ndarray
    unseen: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.seen, dtype=np.int64)
        u = np.asarray(self.unseen, dtype=np.int64)
        object.__setattr__(self, "seen", s)
        object.__setattr__(self, "unseen", u)
        if np.intersect1d(s, u).size:
            raise ValidationError("seen and unseen classes overlap")
        allc = np.sort(np.concatenate([s, u]))
        if not np.array_equal(allc, np.arange(allc.size)):
            raise ValidationError("seen and unseen classes must cover 0..n_c-1 exactly once")

    @classmethod
    def from_counts(cls, n_seen: int, n_unseen: int) -> "ClassPartition":
        return cls(np.arange(n_seen), np.arange(n_seen, n_seen + n_unseen))

    @property
    def n_classes(self) -> int:
        return self.seen.size + self.unseen.size


def _restricted_argmax(scores: np.ndarray, classes: np.ndarray):
    # classes sorted ascending so np.argmax's first-hit rule gives the lowest index on ties
    classes = np.sort(classes)
    sub = scores[..., classes]
    pos = np.argmax(sub, axis=-1)
    return classes[pos], np.take_along_axis(sub, pos[..., None], -1)[..., 0]


def predict_zsl(y_hat, partition: ClassPartition):
    """Argmax over unseen classes; lowest index wins ties."""
    if partition.unseen.size == 0:
        raise ValidationError("no unseen classes to predict among")
    pred, _ = _restricted_argmax(np.asarray(y_hat), partition.unseen)
    return pred if pred.ndim else int(pred)


def predict_gzsl_pnd(y_hat, partition: ClassPartition, gamma: float):
    """Seen-side argmax if max_seen >= gamma * max_unseen, else unseen-side argmax."""
    if not gamma >= 1:
        raise ValidationError(f"gamma must be >= 1, got {gamma}")
    y_hat = np.asarray(y_hat)
    s_pred, s_max = _restricted_argmax(y_hat, partition.seen)
    u_pred, u_max = _restricted_argmax(y_hat, partition.unseen)
    pred = np.where(s_max >= gamma * u_max, s_pred, u_pred)
    return pred if pred.ndim else int(pred)


def class_accuracies(predictions, labels, classes) -> dict[int, float]:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    out = {}
    for c in classes:
        sel = labels == c
        n = int(sel.sum())
        if n == 0:
            raise ValidationError(f"class {int(c)} has no samples")
        out[int(c)] = float(np.sum(predictions[sel] == c)) / n
    return out


def per_class_accuracy(predictions, labels, classes) -> float:
    """Mean over classes of within-class accuracy."""
    accs = class_accuracies(predictions, labels, classes)
    if not accs:
        raise ValidationError("empty class set")
    return float(np.mean(list(accs.values())))


def harmonic_mean(tr: float, ts: float) -> float:
    """2 tr ts / (tr + ts); 0 when both are 0 (see ``is_degenerate``)."""
    if tr < 0 or ts < 0:
        raise ValidationError("accuracies must be nonnegative")
    if tr + ts == 0:
        return 0.0
    return 2.0 * tr * ts / (tr + ts)


def is_degenerate(tr: float, ts: float) -> bool:
    return tr + ts == 0


@dataclass(frozen=True)
class GZSLRecord:
    gamma: float
    ts: float
    tr: float
    H: float
    degenerate: bool = False


@dataclass
class EvalReport:
    zsl_top1: float = float("nan")
    gzsl: list[GZSLRecord] = field(default_factory=list)
    per_class: dict[int, float] = field(default_factory=dict)
    best_gamma: float | None = None

    @property
    def best(self) -> GZSLRecord | None:
        for r in self.gzsl:
            if r.gamma == self.best_gamma:
                return r
        return None

    def gzsl_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["gamma", "ts", "tr", "H"])
        for r in self.gzsl:
            w.writerow([repr(r.gamma), repr(r.ts), repr(r.tr), repr(r.H)])
        return buf.getvalue()

    def zsl_csv(self, class_names=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "accuracy"])
        for c, a in self.per_class.items():
            w.writerow([class_names[c] if class_names else c, repr(a)])
        return buf.getvalue()

    def summary(self) -> str:
        lines = []
        if not np.isnan(self.zsl_top1):
            lines.append(f"ZSL per-class top-1: {self.zsl_top1:.4f}")
        b = self.best
        if b is not None:
            lines.append(f"GZSL best gamma: {b.gamma:.4g}  ts {b.ts:.4f}  tr {b.tr:.4f}  H {b.H:.4f}")
            plain = self.gzsl[0]
            lines.append(f"GZSL gamma={plain.gamma:.4g}: ts {plain.ts:.4f}  tr {plain.tr:.4f}  H {plain.H:.4f}")
        return "\n".join(lines)


def evaluate_zsl(y_hat, labels, partition: ClassPartition) -> EvalReport:
    labels = np.asarray(labels)
    if not np.all(np.isin(labels, partition.unseen)):
        raise ValidationError("ZSL evaluation takes unseen-class samples only")
    pred = predict_zsl(y_hat, partition)
    per = class_accuracies(pred, labels, np.unique(labels))
    return EvalReport(zsl_top1=float(np.mean(list(per.values()))), per_class=per)


def gzsl_sweep(y_hat, labels, partition: ClassPartition, gamma_grid) -> EvalReport:
    """ts / tr / H for every gamma; ``best_gamma`` maximizes H (first on ties)."""
    y_hat = np.asarray(y_hat)
    labels = np.asarray(labels)
    is_unseen = np.isin(labels, partition.unseen)
    if not is_unseen.any() or is_unseen.all():
        raise ValidationError("GZSL needs test samples from both seen and unseen classes")
    ts_classes = np.unique(labels[is_unseen])
    tr_classes = np.unique(labels[~is_unseen])
    report = EvalReport()
    for g in gamma_grid:
        pred = predict_gzsl_pnd(y_hat, partition, float(g))
        ts = per_class_accuracy(pred[is_unseen], labels[is_unseen], ts_classes)
        tr = per_class_accuracy(pred[~is_unseen], labels[~is_unseen], tr_classes)
        report.gzsl.append(GZSLRecord(float(g), ts, tr, harmonic_mean(tr, ts),
                                      is_degenerate(tr, ts)))
    if report.gzsl:
        report.best_gamma = max(report.gzsl, key=lambda r: r.H).gamma
    zsl = evaluate_zsl(y_hat[is_unseen], labels[is_unseen], partition)
    report.zsl_top1, report.per_class = zsl.zsl_top1, zsl.per_class
    return report


def parse_gamma_grid(text: str) -> tuple[float, ...]:
    """``start:stop:count`` (inclusive endpoints) or a comma list."""
    try:
        if ":" in text:
            a, b, n = text.split(":")
            return tuple(float(g) for g in np.linspace(float(a), float(b), int(n)))
        return tuple(float(g) for g in text.split(",") if g.strip())
    except ValueError:
        raise ValidationError(f"bad gamma grid {text!r}") from None
