"""AdaGrad training of the head with early stopping on validation accuracy."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import model as M
from .evaluation import per_class_accuracy
from .numerics import ShapeError, ValidationError, make_rng
from .semantics import AttributeMatrix, NeighborRule, SoftLabelTable, restrict, soft_labels

log = logging.getLogger(__name__)

DECAYED = ("W0", "W1")


def default_gamma_grid() -> tuple[float, ...]:
    return tuple(float(g) for g in np.linspace(1.0, 2.0, 21))


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 5e-3
    alpha: float = 0.5
    beta: float = 1.4
    k_scale: int = 7
    eta: float = 0.5
    gamma_grid: tuple[float, ...] = field(default_factory=default_gamma_grid)
    epochs_max: int = 3000
    batch_size: int = 64
    patience: int = 300
    seed: int = 0
    mode: str = "gsc"
    loss: str = "sle"
    normalize_attributes: bool = True

    def __post_init__(self):
        self.gamma_grid = tuple(float(g) for g in self.gamma_grid)
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be > 0")
        if self.weight_decay < 0:
            raise ValidationError("weight_decay must be >= 0")
        if not 0 <= self.alpha <= 1:
            raise ValidationError("alpha must be in [0, 1]")
        if not 0 < self.eta <= 1:
            raise ValidationError("eta must be in (0, 1]")
        if self.patience < 1 or self.epochs_max < 1 or self.batch_size < 1:
            raise ValidationError("patience, epochs_max and batch_size must be >= 1")
        if self.mode not in M.MODES:
            raise ValidationError(f"unknown mode {self.mode!r}")
        if self.loss not in ("onehot", "sle"):
            raise ValidationError(f"unknown loss {self.loss!r}")

    def to_text(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if isinstance(v, (tuple, list)):
                v = ",".join(repr(g) for g in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TrainConfig":
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"config line {lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValidationError(f"config line {lineno}: unknown key {key!r}")
            kw[key] = _parse_value(types[key], val, lineno)
        return cls(**kw)


def _parse_value(tp: str, val: str, lineno: int):
    try:
        if tp == "float":
            return float(val)
        if tp == "int":
            return int(val)
        if tp == "bool":
            if val.lower() not in ("true", "false"):
                raise ValueError(val)
            return val.lower() == "true"
        if tp.startswith("tuple"):
            return tuple(float(g) for g in val.split(",") if g.strip())
        return val
    except ValueError:
        raise ValidationError(f"config line {lineno}: bad value {val!r}") from None


@dataclass
class AdaGradState:
    accum: dict[str, np.ndarray]
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, params: M.HeadParameters, epsilon: float = 1e-8) -> "AdaGradState":
        return cls({k: np.zeros_like(v) for k, v in params.tensors().items()}, epsilon)


def adagrad_step(params: M.HeadParameters, grads: M.Gradients, state: AdaGradState,
                 lr: float, weight_decay: float = 0.0):
    """One AdaGrad update with L2 decay folded into the weight gradients.

    Returns new (params, state); the inputs are left untouched.
    """
    if not lr > 0:
        raise ValidationError("learning rate must be > 0")
    new_p, new_acc = {}, {}
    g_all = grads.tensors()
    for name, p in params.tensors().items():
        g = g_all[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient {name} has shape {g.shape}, parameter {p.shape}")
        if name in DECAYED and weight_decay:
            g = g + weight_decay * p
        acc = state.accum[name] + g * g
        new_acc[name] = acc
        new_p[name] = p - lr * g / (np.sqrt(acc) + state.epsilon)
    return M.HeadParameters(**new_p), AdaGradState(new_acc, state.epsilon)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: float = float("nan")
    val_loss: float = float("nan")
    steps: int = 0


HISTORY_HEADER = ("epoch", "train_loss", "train_acc", "val_acc", "val_loss", "steps")


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False
    notes: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for r in self.records:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.train_acc), repr(r.val_acc),
                        repr(r.val_loss), r.steps])
        return buf.getvalue()


class TrainingProblem:
    """Everything fixed across epochs: attribute layer, active classes, soft labels."""

    def __init__(self, attr: AttributeMatrix, config: TrainConfig):
        self.config = config
        self.attr = attr
        self.active = M.active_classes(attr, config.mode, training=True)
        self.soft: SoftLabelTable | None = None
        if config.loss == "sle" and config.alpha < 1:
            # SC mode never sees unseen attributes, so its graph is over seen classes
            graph_attr = restrict(attr, self.active) if config.mode == "sc" else attr
            k = min(config.k_scale, graph_attr.n_classes - 1)
            self.soft = soft_labels(graph_attr, config.beta, k, NeighborRule())

    @property
    def alpha(self) -> float:
        return self.config.alpha if self.config.loss == "sle" else 1.0

    def targets(self, labels: np.ndarray) -> np.ndarray:
        return M.sle_target(labels, self.soft, self.alpha, len(self.active))


def _check_seen(labels: np.ndarray, attr: AttributeMatrix, what: str):
    bad = np.flatnonzero((labels < 0) | (labels >= attr.n_seen))
    if bad.size:
        raise ValidationError(
            f"{what} sample {int(bad[0])} has label {int(labels[bad[0]])}, not a seen class")


def run_epoch(features: np.ndarray, labels: np.ndarray, params: M.HeadParameters,
              state: AdaGradState, problem: TrainingProblem, rng: np.random.Generator,
              epoch: int = 1):
    cfg = problem.config
    labels = np.asarray(labels)
    n = len(labels)
    if n == 0:
        raise ValidationError("empty training set")
    _check_seen(labels, problem.attr, "training")
    order = rng.permutation(n)
    L = params.W0.shape[0]
    loss_sum, correct, steps = 0.0, 0, 0
    for start in range(0, n, cfg.batch_size):
        idx = order[start:start + cfg.batch_size]
        mask = M.dropout_mask(rng, (len(idx), L), cfg.eta)
        trace = M.forward(params, problem.attr, features[idx], mask, problem.active)
        target = problem.targets(labels[idx])
        loss_sum += float(np.sum(M.cross_entropy(trace.y_hat, target)))
        correct += int(np.sum(np.argmax(trace.y_hat, axis=1) == labels[idx]))
        grads = M.backward(trace, problem.attr, target, params)
        params, state = adagrad_step(params, grads, state, cfg.learning_rate, cfg.weight_decay)
        steps += 1
    return params, state, EpochRecord(epoch, loss_sum / n, correct / n, steps=steps)


def seen_accuracy(params: M.HeadParameters, attr: AttributeMatrix, features, labels) -> float:
    """Per-class accuracy with prediction restricted to seen classes."""
    scores = M.forward(params, attr, features, active=attr.seen).y_out
    pred = np.argmax(scores, axis=1)
    return per_class_accuracy(pred, labels, np.unique(labels))


def validation_loss(params: M.HeadParameters, problem: TrainingProblem, features, labels) -> float:
    trace = M.forward(params, problem.attr, features, active=problem.active)
    return M.batch_loss(trace, problem.targets(labels))


class EarlyStopping:
    """Patience counter over validation scores (higher is better).

    Scores may be tuples, compared lexicographically.
    """

    def __init__(self, patience: int):
        self.patience = patience
        self.best = None
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, score) -> bool:
        """Record a score; True when training should stop."""
        if self.best is None or score > self.best:
            self.best, self.best_epoch, self.bad_epochs = score, epoch, 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def fit(attr: AttributeMatrix, train_x, train_y, val_x=None, val_y=None,
        config: TrainConfig | None = None, params: M.HeadParameters | None = None):
    """Train from scratch (or from ``params``); returns (best params, history)."""
    cfg = config or TrainConfig()
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y)
    rng = make_rng(cfg.seed)
    problem = TrainingProblem(attr, cfg)
    if params is None:
        head = M.HeadConfig(train_x.shape[1], attr.attributes_dim, cfg.eta, cfg.mode)
        params = M.init_parameters(head, rng)
    state = AdaGradState.zeros_like(params)
    history = TrainHistory()
    has_val = val_y is not None and len(val_y) > 0
    if has_val:
        val_y = np.asarray(val_y)
        _check_seen(val_y, attr, "validation")
    else:
        history.notes.append("empty validation split: early stopping disabled")
        log.warning(history.notes[-1])
    stopper = EarlyStopping(cfg.patience)
    best = params.copy()
    for epoch in range(1, cfg.epochs_max + 1):
        params, state, rec = run_epoch(train_x, train_y, params, state, problem, rng, epoch)
        if has_val:
            rec.val_acc = seen_accuracy(params, attr, val_x, val_y)
            rec.val_loss = validation_loss(params, problem, val_x, val_y)
        history.records.append(rec)
        log.debug("epoch %d loss %.5f train %.4f val %.4f", epoch, rec.train_loss,
                  rec.train_acc, rec.val_acc)
        if not has_val:
            best, history.best_epoch = params, epoch
            continue
        # accuracy saturates long before the loss does; the loss breaks ties
        stop = stopper.update(epoch, (rec.val_acc, -rec.val_loss))
        if stopper.best_epoch == epoch:
            best, history.best_epoch = params, epoch
        if stop:
            history.stopped_early = True
            break
    return best, history
