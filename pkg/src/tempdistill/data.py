"""Datasets, CSV tables, checkpoints and run configuration files.

All numbers are written with ``repr(float)``, which is the shortest string
that parses back to the identical double, so every format here round-trips
bit-exactly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from .mlp import TeacherModel
from .snn import LifConfig, SnnNetwork
from .tensor import DimensionError

FORMAT_VERSION = 1
CHECKPOINT_MAGIC = "tempdistill-checkpoint"


class DataError(ValueError):
    """Malformed or inconsistent input file."""


class CheckpointError(DataError):
    pass


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    split: str = "train"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise DimensionError(
                f"features {self.features.shape} and labels {self.labels.shape} do not align")
        if not np.isfinite(self.features).all():
            raise DataError("features contain NaN or Inf")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise DataError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> Dataset:
        return Dataset(self.features[idx], self.labels[idx], self.n_classes, self.split)


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# synthetic data


def gen_spiral(classes: int, per_class: int, noise: float, seed: int) -> Dataset:
    """Interleaved 2-D spiral arms, one per class, standardized per feature.

    Arm ``j`` sweeps radius 0..1 over angles ``[4j, 4(j+1)]`` with Gaussian
    angular noise of standard deviation ``noise``.
    """
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    if per_class < 1:
        raise ValueError(f"per_class must be positive, got {per_class}")
    if noise < 0:
        raise ValueError(f"noise must be non-negative, got {noise}")
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for j in range(classes):
        r = np.linspace(0.0, 1.0, per_class)
        theta = np.linspace(4.0 * j, 4.0 * (j + 1), per_class) + rng.standard_normal(per_class) * noise
        xs.append(np.column_stack([r * np.sin(theta), r * np.cos(theta)]))
        ys.append(np.full(per_class, j))
    X = np.concatenate(xs)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    X = (X - X.mean(axis=0)) / std
    return Dataset(X, np.concatenate(ys), classes)


def spiral_splits(classes: int, train_per_class: int, test_per_class: int, noise: float,
                  seed: int) -> tuple[Dataset, Dataset]:
    """Draw one spiral and partition each arm at random into train/test."""
    full = gen_spiral(classes, train_per_class + test_per_class, noise, seed)
    rng = np.random.default_rng([seed, 1])
    train_idx, test_idx = [], []
    for j in range(classes):
        idx = np.flatnonzero(full.labels == j)
        idx = idx[rng.permutation(len(idx))]
        test_idx.append(np.sort(idx[:test_per_class]))
        train_idx.append(np.sort(idx[test_per_class:]))
    train = full.subset(np.concatenate(train_idx))
    test = full.subset(np.concatenate(test_idx))
    test.split = "test"
    return train, test


# ---------------------------------------------------------------------------
# CSV datasets


def save_csv_dataset(ds: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + [f"f{i + 1}" for i in range(ds.n_features)])
        for x, y in zip(ds.features, ds.labels):
            w.writerow([int(y)] + [_fmt(v) for v in x])


def load_csv_dataset(path, label_column: str = "label", n_classes: int | None = None,
                     split: str = "train") -> Dataset:
    """Read a ``label,f1,...,fd`` table.

    Rows are numbered from 1 after the header in error messages.
    ``n_classes`` defaults to ``max(label) + 1``.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0]:
        raise DataError(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    if label_column not in header:
        raise DataError(f"{path}: header has no {label_column!r} column")
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    li = header.index(label_column)
    feats, labels = [], []
    for rno, row in enumerate(rows[1:], start=1):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"{path}: row {rno} has {len(row)} cells, expected {len(header)}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise DataError(f"{path}: row {rno} has a non-numeric cell") from None
        if not all(math.isfinite(v) for v in vals):
            raise DataError(f"{path}: row {rno} has a non-finite value")
        lab = vals[li]
        if lab != int(lab) or lab < 0:
            raise DataError(f"{path}: row {rno} label {row[li]!r} is not a non-negative integer")
        labels.append(int(lab))
        feats.append([v for i, v in enumerate(vals) if i != li])
    if n_classes is None:
        n_classes = max(labels) + 1 if labels else 1
    elif labels and max(labels) >= n_classes:
        bad = next(i for i, y in enumerate(labels, start=1) if y >= n_classes)
        raise DataError(f"{path}: row {bad} label out of range [0, {n_classes})")
    d = len(header) - 1
    X = np.array(feats, dtype=np.float64).reshape(len(feats), d)
    return Dataset(X, np.array(labels, dtype=np.int64), n_classes, split)


# ---------------------------------------------------------------------------
# teacher logits


@dataclass
class LogitsTable:
    """Teacher logits keyed by integer sample id."""

    rows: dict[int, np.ndarray]
    n_classes: int

    def lookup(self, ids) -> np.ndarray:
        out = np.empty((len(ids), self.n_classes))
        for k, i in enumerate(ids):
            try:
                out[k] = self.rows[int(i)]
            except KeyError:
                raise DataError(f"teacher logits missing sample id {int(i)}") from None
        return out


def save_teacher_logits(path, logits: np.ndarray, ids=None) -> None:
    logits = np.asarray(logits, dtype=np.float64)
    ids = range(len(logits)) if ids is None else ids
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id"] + [f"z{i + 1}" for i in range(logits.shape[1])])
        for i, z in zip(ids, logits):
            w.writerow([int(i)] + [_fmt(v) for v in z])


def load_teacher_logits(path, n_classes: int | None = None, sample_ids=None) -> LogitsTable:
    """Read a ``sample_id,z1,...,zn`` table.

    With ``sample_ids`` given, every id must be present in the file.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"teacher logits file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0].strip() != "sample_id":
        raise DataError(f"{path}: header must start with 'sample_id'")
    n = len(rows[0]) - 1
    if n_classes is not None and n != n_classes:
        raise DimensionError(f"{path}: {n} logit columns but {n_classes} classes expected")
    table: dict[int, np.ndarray] = {}
    for rno, row in enumerate(rows[1:], start=1):
        if not row:
            continue
        if len(row) != n + 1:
            raise DimensionError(f"{path}: row {rno} has {len(row) - 1} logits, expected {n}")
        try:
            sid = int(row[0])
            table[sid] = np.array([float(c) for c in row[1:]])
        except ValueError:
            raise DataError(f"{path}: row {rno} has a non-numeric cell") from None
    lt = LogitsTable(table, n)
    if sample_ids is not None:
        for i in sample_ids:
            if int(i) not in table:
                raise DataError(f"teacher logits missing sample id {int(i)}")
    return lt


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    model: SnnNetwork | TeacherModel
    meta: dict[str, str] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION


def _join(xs) -> str:
    return ",".join(str(x) for x in xs)


def save_checkpoint(model: SnnNetwork | TeacherModel, meta: Mapping[str, Any], path) -> None:
    """Write a self-describing text checkpoint.

    Layout: a magic line, ``key = value`` header lines, then one
    ``array <name> <dims>`` line per parameter followed by its values on a
    single space-separated line, then ``end``.
    """
    lines = [CHECKPOINT_MAGIC, f"format_version = {FORMAT_VERSION}"]
    if isinstance(model, SnnNetwork):
        lif = model.lif
        lines += ["kind = snn", f"sizes = {_join(model.sizes)}",
                  f"decay = {_fmt(lif.decay)}", f"threshold = {_fmt(lif.threshold)}",
                  f"surrogate_slope = {_fmt(lif.surrogate_slope)}",
                  f"detach_reset = {str(lif.detach_reset).lower()}"]
    elif isinstance(model, TeacherModel):
        lines += ["kind = mlp", f"sizes = {_join(model.sizes)}"]
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    for k in sorted(meta):
        v = meta[k]
        v = _fmt(v) if isinstance(v, float) else str(v)
        if not k or " " in k or "\n" in v:
            raise ValueError(f"metadata {k!r} is not a single-line token")
        lines.append(f"meta.{k} = {v}")
    for name, arr in zip(model.param_names(), model.params):
        lines.append(f"array {name} {_join(arr.shape)}")
        lines.append(" ".join(_fmt(v) for v in arr.reshape(-1)))
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_bool(s: str) -> bool:
    if s in ("true", "1", "yes"):
        return True
    if s in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def read_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    lines = path.read_text().split("\n")
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic line)")
    header: dict[str, str] = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("array ") and lines[i] != "end":
        if lines[i].strip():
            if " = " not in lines[i]:
                raise CheckpointError(f"{path}: line {i + 1}: malformed header entry")
            k, v = lines[i].split(" = ", 1)
            header[k] = v
        i += 1
    try:
        version = int(header["format_version"])
    except (KeyError, ValueError):
        raise CheckpointError(f"{path}: missing or invalid format_version") from None
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format_version {version} "
                              f"(this build reads {FORMAT_VERSION})")
    arrays: list[tuple[str, np.ndarray]] = []
    ended = False
    while i < len(lines):
        line = lines[i]
        if line == "end":
            ended = True
            break
        parts = line.split(" ")
        if len(parts) != 3 or parts[0] != "array":
            raise CheckpointError(f"{path}: line {i + 1}: expected an array declaration")
        try:
            shape = tuple(int(d) for d in parts[2].split(","))
        except ValueError:
            raise CheckpointError(f"{path}: line {i + 1}: bad shape {parts[2]!r}") from None
        if i + 1 >= len(lines):
            raise CheckpointError(f"{path}: truncated inside array {parts[1]}")
        try:
            vals = np.array([float(v) for v in lines[i + 1].split(" ")], dtype=np.float64)
        except ValueError:
            raise CheckpointError(f"{path}: line {i + 2}: non-numeric value in {parts[1]}") from None
        if vals.size != math.prod(shape):
            raise CheckpointError(f"{path}: array {parts[1]} declares shape {shape} "
                                  f"but holds {vals.size} values")
        arrays.append((parts[1], vals.reshape(shape)))
        i += 2
    if not ended:
        raise CheckpointError(f"{path}: truncated (no end marker)")
    try:
        kind = header["kind"]
        sizes = [int(s) for s in header["sizes"].split(",")]
        if kind == "snn":
            lif = LifConfig(decay=float(header["decay"]), threshold=float(header["threshold"]),
                            surrogate_slope=float(header["surrogate_slope"]),
                            detach_reset=_parse_bool(header["detach_reset"]))
            model = SnnNetwork(sizes, [a for _, a in arrays], lif)
        elif kind == "mlp":
            model = TeacherModel(sizes, [a for _, a in arrays])
        else:
            raise CheckpointError(f"{path}: unknown model kind {kind!r}")
    except KeyError as e:
        raise CheckpointError(f"{path}: missing header field {e.args[0]}") from None
    except (ValueError, DimensionError) as e:
        if isinstance(e, CheckpointError):
            raise
        raise CheckpointError(f"{path}: inconsistent model description: {e}") from None
    names = [n for n, _ in arrays]
    if names != model.param_names():
        raise CheckpointError(f"{path}: array names {names} do not match the architecture")
    meta = {k[5:]: v for k, v in header.items() if k.startswith("meta.")}
    return Checkpoint(model, meta, version)


def load_checkpoint(path) -> SnnNetwork | TeacherModel:
    return read_checkpoint(path).model


# ---------------------------------------------------------------------------
# run configuration


def parse_config(path, schema: Mapping[str, Callable[[str], Any]]) -> dict[str, Any]:
    """Parse a flat ``key = value`` file; ``#`` starts a comment.

    ``schema`` maps every accepted key to its converter.  Unknown keys,
    duplicates and unconvertible values are errors.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    out: dict[str, Any] = {}
    for lno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in schema:
            raise DataError(f"{path}:{lno}: unknown key {key!r}")
        if key in out:
            raise DataError(f"{path}:{lno}: duplicate key {key!r}")
        try:
            out[key] = schema[key](val)
        except ValueError as e:
            raise DataError(f"{path}:{lno}: bad value for {key!r}: {e}") from None
    return out


def parse_bool(s: str) -> bool:
    return _parse_bool(s.strip().lower())


def parse_int_list(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.split(",") if v.strip())
