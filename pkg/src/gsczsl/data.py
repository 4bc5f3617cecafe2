"""On-disk formats, dataset bundles and the planted synthetic task.

Text tables start with a one-line header ``#gsc-zsl v1 <kind> <rows> <cols>``.
Feature matrices use a binary container::

    b"GZSL" | u16 version | u64 rows | u64 cols | rows*cols float32   (all little-endian)

A dataset directory holds ``attributes.csv``, ``features.gzsl``,
``labels.csv`` and ``splits.csv``.
"""
from __future__ import annotations

import base64
import hashlib
import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .model import HeadConfig, HeadParameters
from .numerics import ShapeError, ValidationError, make_rng
from .semantics import AttributeMatrix, column_normalize_attributes

MAGIC = b"GZSL"
FEATURE_VERSION = 1
CHECKPOINT_VERSION = 1
SPLITS = ("train", "val", "test_seen", "test_unseen")
FILES = {"attributes": "attributes.csv", "features": "features.gzsl",
         "labels": "labels.csv", "splits": "splits.csv"}


class FormatError(ValidationError):
    kind = "format"

    def __init__(self, msg, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + msg)


def fmt_float(x: float) -> str:
    return repr(float(x))


# -- text tables -----------------------------------------------------------

def _header(kind: str, rows: int, cols: int) -> str:
    return f"#gsc-zsl v1 {kind} {rows} {cols}\n"


def _read_table(path, kind: str):
    """Yield (lineno, fields) for the data lines; returns header rows/cols first."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise FormatError("empty file", path)
    parts = lines[0].split()
    if len(parts) != 5 or parts[0] != "#gsc-zsl" or parts[1] != "v1":
        raise FormatError(f"bad header {lines[0]!r}", path, 1)
    if parts[2] != kind:
        raise FormatError(f"expected a {kind!r} table, found {parts[2]!r}", path, 1)
    try:
        rows, cols = int(parts[3]), int(parts[4])
    except ValueError:
        raise FormatError("non-integer row/column count", path, 1) from None
    body = [(i + 2, ln.split(",")) for i, ln in enumerate(lines[1:]) if ln.strip()]
    if len(body) != rows:
        raise FormatError(f"header declares {rows} rows, found {len(body)}", path)
    return rows, cols, body


def _floats(fields, path, lineno):
    try:
        return [float(v) for v in fields]
    except ValueError:
        raise FormatError("non-numeric value", path, lineno) from None


def write_attributes(path, attr: AttributeMatrix, values: np.ndarray | None = None):
    """One row per class: ``name,seen|unseen,v1..vL`` (raw values by default)."""
    values = attr.raw if values is None else values
    L, n_c = values.shape
    out = [_header("attributes", n_c, L)]
    for c in range(n_c):
        side = "seen" if attr.is_seen(c) else "unseen"
        vals = ",".join(fmt_float(v) for v in values[:, c])
        out.append(f"{attr.class_names[c]},{side},{vals}\n")
    Path(path).write_text("".join(out))


def read_attributes(path) -> AttributeMatrix:
    n_c, L, body = _read_table(path, "attributes")
    names, sides, cols = [], [], []
    for lineno, f in body:
        if len(f) != L + 2:
            raise FormatError(f"expected {L + 2} fields, found {len(f)}", path, lineno)
        if f[1] not in ("seen", "unseen"):
            raise FormatError(f"partition flag must be seen|unseen, got {f[1]!r}", path, lineno)
        if sides and sides[-1] == "unseen" and f[1] == "seen":
            raise FormatError("seen classes must precede unseen classes", path, lineno)
        names.append(f[0])
        sides.append(f[1])
        cols.append(_floats(f[2:], path, lineno))
    n_seen = sides.count("seen")
    if n_seen == 0:
        raise FormatError("no seen classes", path)
    return AttributeMatrix(np.array(cols, dtype=np.float64).T.reshape(L, n_c), n_seen,
                           tuple(names))


def write_gsc_weight(path, attr: AttributeMatrix):
    """GSC-layer weight, one row per class: ``name,v1..vL``."""
    L, n_c = attr.columns.shape
    out = [_header("gsc-weight", n_c, L)]
    for c in range(n_c):
        out.append(attr.class_names[c] + "," + ",".join(fmt_float(v) for v in attr.columns[:, c]) + "\n")
    Path(path).write_text("".join(out))


def read_gsc_weight(path):
    """Returns (class names, n_c x L matrix)."""
    n_c, L, body = _read_table(path, "gsc-weight")
    names, rows = [], []
    for lineno, f in body:
        if len(f) != L + 1:
            raise FormatError(f"expected {L + 1} fields, found {len(f)}", path, lineno)
        names.append(f[0])
        rows.append(_floats(f[1:], path, lineno))
    return names, np.array(rows, dtype=np.float64).reshape(n_c, L)


def export_gsc_weight(source, path):
    """Write the GSC-layer weight of an AttributeMatrix or checkpoint file."""
    attr = source if isinstance(source, AttributeMatrix) else load_checkpoint(source).attr
    write_gsc_weight(path, attr)


def write_labels(path, labels):
    labels = np.asarray(labels)
    Path(path).write_text(_header("labels", len(labels), 1) + "".join(f"{int(y)}\n" for y in labels))


def read_labels(path, class_names=()):
    n, _, body = _read_table(path, "labels")
    lookup = {name: i for i, name in enumerate(class_names)}
    out = np.empty(n, dtype=np.int64)
    for k, (lineno, f) in enumerate(body):
        tok = f[0].strip()
        try:
            out[k] = int(tok)
        except ValueError:
            if tok not in lookup:
                raise FormatError(f"unknown class name {tok!r}", path, lineno) from None
            out[k] = lookup[tok]
    return out


def write_splits(path, splits):
    splits = list(splits)
    Path(path).write_text(_header("splits", len(splits), 2)
                          + "".join(f"{i},{s}\n" for i, s in enumerate(splits)))


def read_splits(path):
    n, _, body = _read_table(path, "splits")
    out = np.empty(n, dtype=object)
    seen = np.zeros(n, dtype=bool)
    for lineno, f in body:
        if len(f) != 2 or f[1] not in SPLITS:
            raise FormatError(f"expected index,<{'|'.join(SPLITS)}>", path, lineno)
        try:
            i = int(f[0])
        except ValueError:
            raise FormatError("non-integer sample index", path, lineno) from None
        if not 0 <= i < n or seen[i]:
            raise FormatError(f"sample index {i} out of range or repeated", path, lineno)
        seen[i] = True
        out[i] = f[1]
    return out.astype(str)


# -- binary features --------------------------------------------------------

def write_features(path, features):
    f = np.asarray(features)
    if f.ndim != 2:
        raise ShapeError(f"features must be 2-D, got {f.shape}")
    head = MAGIC + struct.pack("<HQQ", FEATURE_VERSION, *f.shape)
    Path(path).write_bytes(head + np.ascontiguousarray(f, dtype="<f4").tobytes())


def read_features(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError("not a GZSL feature file (bad magic)", path)
    if len(raw) < 22:
        raise FormatError("truncated header", path)
    version, rows, cols = struct.unpack("<HQQ", raw[4:22])
    if version != FEATURE_VERSION:
        raise FormatError(f"unsupported feature file version {version}", path)
    if len(raw) - 22 != rows * cols * 4:
        raise FormatError(f"payload size does not match {rows} x {cols}", path)
    arr = np.frombuffer(raw, dtype="<f4", offset=22).reshape(rows, cols)
    return arr.astype(np.float64)


# -- dataset bundle -----------------------------------------------------------

@dataclass
class DatasetBundle:
    features: np.ndarray
    labels: np.ndarray
    splits: np.ndarray
    attr: AttributeMatrix
    digest: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self):
        n = self.features.shape[0]
        if len(self.labels) != n or len(self.splits) != n:
            raise ValidationError(
                f"{n} feature rows, {len(self.labels)} labels, {len(self.splits)} split tags")
        bad = np.flatnonzero((self.labels < 0) | (self.labels >= self.attr.n_classes))
        if bad.size:
            raise ValidationError(f"row {int(bad[0])}: label {int(self.labels[bad[0]])} is not a class index")
        seen = self.labels < self.attr.n_seen
        for tag, want_seen in (("train", True), ("val", True), ("test_seen", True),
                               ("test_unseen", False)):
            wrong = np.flatnonzero((self.splits == tag) & (seen != want_seen))
            if wrong.size:
                side = "seen" if want_seen else "unseen"
                raise ValidationError(
                    f"row {int(wrong[0])}: {tag} sample carries label "
                    f"{int(self.labels[wrong[0]])}, which is not a {side} class")
        unknown = np.flatnonzero(~np.isin(self.splits, SPLITS))
        if unknown.size:
            raise ValidationError(f"row {int(unknown[0])}: unknown split {self.splits[unknown[0]]!r}")

    def split(self, *tags):
        sel = np.isin(self.splits, tags)
        return self.features[sel], self.labels[sel]


def save_dataset(directory, bundle: DatasetBundle):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_attributes(d / FILES["attributes"], bundle.attr)
    write_features(d / FILES["features"], bundle.features)
    write_labels(d / FILES["labels"], bundle.labels)
    write_splits(d / FILES["splits"], bundle.splits)


def load_dataset(directory=None, *, attributes=None, features=None, labels=None,
                 splits=None, feature_dim: int | None = None) -> DatasetBundle:
    """Load and validate a bundle from a directory or explicit file paths."""
    d = Path(directory) if directory is not None else None
    paths = {}
    for key, given in (("attributes", attributes), ("features", features),
                       ("labels", labels), ("splits", splits)):
        p = Path(given) if given is not None else (d / FILES[key] if d else None)
        if p is None or not p.exists():
            raise FormatError(f"missing {key} file", p)
        paths[key] = p
    attr = read_attributes(paths["attributes"])
    feats = read_features(paths["features"])
    if feature_dim is not None and feats.shape[1] != feature_dim:
        raise ShapeError(f"{paths['features']}: feature dimension {feats.shape[1]}, expected {feature_dim}")
    ys = read_labels(paths["labels"], attr.class_names)
    tags = read_splits(paths["splits"])
    h = hashlib.sha256()
    for key in ("attributes", "features", "labels", "splits"):
        h.update(paths[key].read_bytes())
    try:
        return DatasetBundle(feats, ys, tags, attr, h.hexdigest())
    except ValidationError as e:
        raise ValidationError(f"{d or paths['labels']}: {e}") from None


# -- synthetic task -----------------------------------------------------------

@dataclass(frozen=True)
class SynthSpec:
    n_tr: int = 20
    n_ts: int = 10
    L: int = 16
    D: int = 64
    samples_per_class: int = 50
    noise_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        for name in ("n_tr", "n_ts", "L", "D", "samples_per_class"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be >= 0")


@dataclass
class SynthTask:
    bundle: DatasetBundle
    mapping: np.ndarray  # D x L planted linear map
    class_means: np.ndarray  # n_c x D, noise-free sample of each class


def seen_split_counts(n: int) -> tuple[int, int, int]:
    """train / val / test_seen counts for one seen class (60/20/20, train >= 1)."""
    n_val = n // 5
    n_test = n // 5
    return n - n_val - n_test, n_val, n_test


def generate_synthetic(spec: SynthSpec) -> SynthTask:
    rng = make_rng(spec.seed)
    n_c = spec.n_tr + spec.n_ts
    raw = rng.uniform(0.0, 1.0, size=(spec.L, n_c))
    # a zero column has probability 0 but would break normalization
    raw[:, np.linalg.norm(raw, axis=0) == 0] = 1.0
    attr = column_normalize_attributes(AttributeMatrix(raw, spec.n_tr))
    attr = AttributeMatrix(attr.columns, spec.n_tr, attr.class_names)
    mapping = rng.standard_normal((spec.D, spec.L))
    # stored features are float32; round the means so zero noise is exact on disk
    means = (attr.columns.T @ mapping.T).astype(np.float32).astype(np.float64)
    feats, labels, splits = [], [], []
    k = spec.samples_per_class
    n_train, n_val, n_test = seen_split_counts(k)
    for c in range(n_c):
        x = means[c] + spec.noise_sigma * rng.standard_normal((k, spec.D))
        feats.append(x)
        labels.extend([c] * k)
        if c < spec.n_tr:
            splits.extend(["train"] * n_train + ["val"] * n_val + ["test_seen"] * n_test)
        else:
            splits.extend(["test_unseen"] * k)
    features = np.vstack(feats).astype(np.float32).astype(np.float64)
    bundle = DatasetBundle(features, np.array(labels, dtype=np.int64), np.array(splits), attr)
    return SynthTask(bundle, mapping, means)


def nearest_mean_accuracy(task: SynthTask) -> float:
    """Unseen per-class accuracy of nearest planted class mean among unseen classes."""
    from .evaluation import per_class_accuracy

    b = task.bundle
    x, y = b.split("test_unseen")
    unseen = b.attr.unseen
    d = ((x[:, None, :] - task.class_means[unseen][None, :, :]) ** 2).sum(-1)
    pred = unseen[np.argmin(d, axis=1)]
    return per_class_accuracy(pred, y, unseen)


# -- checkpoints --------------------------------------------------------------

def _encode(a: np.ndarray) -> dict:
    return {"shape": list(a.shape),
            "data": base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode()}


def _decode(d: dict) -> np.ndarray:
    arr = np.frombuffer(base64.b64decode(d["data"]), dtype="<f8")
    return arr.reshape(d["shape"]).astype(np.float64)


@dataclass
class Checkpoint:
    head: HeadConfig
    params: HeadParameters
    attr: AttributeMatrix  # the GSC layer as used in training
    seed: int
    config: dict


def save_checkpoint(path, ckpt: Checkpoint):
    doc = {
        "format": "gsc-zsl-checkpoint",
        "version": CHECKPOINT_VERSION,
        "head": asdict(ckpt.head),
        "seed": ckpt.seed,
        "config": ckpt.config,
        "attributes_digest": ckpt.attr.digest(),
        "gsc_layer": {"n_seen": ckpt.attr.n_seen, "class_names": list(ckpt.attr.class_names),
                      "columns": _encode(ckpt.attr.columns)},
        "params": {k: _encode(v) for k, v in ckpt.params.tensors().items()},
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_checkpoint(path) -> Checkpoint:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"unreadable checkpoint: {e}", path) from None
    if doc.get("format") != "gsc-zsl-checkpoint" or doc.get("version") != CHECKPOINT_VERSION:
        raise FormatError("not a version-1 gsc-zsl checkpoint", path)
    g = doc["gsc_layer"]
    attr = AttributeMatrix(_decode(g["columns"]), g["n_seen"], tuple(g["class_names"]))
    if attr.digest() != doc["attributes_digest"]:
        raise FormatError("attribute digest mismatch", path)
    params = HeadParameters(**{k: _decode(v) for k, v in doc["params"].items()})
    return Checkpoint(HeadConfig(**doc["head"]), params, attr, doc["seed"], doc["config"])
