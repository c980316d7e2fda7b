"""Teacher training and temporal-wise distillation of the spiking student."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Dataset, LogitsTable, _fmt
from .losses import LOSS_MODES, LossBreakdown, LossWeights, ce_loss, loss_terms, objective, one_hot
from .losses import breakdown as _breakdown
from .mlp import TeacherModel
from .snn import LifConfig, SnnNetwork, forward_unroll
from .tensor import DimensionError, Tape, stack_mean

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Raised when the loss becomes non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 32
    lr0: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    T: int = 6
    alpha: float = 0.2
    beta: float = 0.5
    tau: float = 4.0
    seed: int = 0
    loss_mode: str = "temporal_kd_full"
    hidden: tuple[int, ...] = (64, 64)
    detach_ensemble: bool = True
    decay: float = 0.5
    threshold: float = 1.0
    surrogate_slope: float = 4.0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1 or self.T < 1:
            raise ValueError("batch_size and T must be positive")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}")
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("hidden must list positive layer widths")
        self.weights  # validates alpha/beta/tau
        self.lif

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.alpha, self.beta, self.tau)

    @property
    def lif(self) -> LifConfig:
        return LifConfig(self.decay, self.threshold, self.surrogate_slope)


@dataclass(frozen=True)
class TeacherConfig:
    epochs: int = 50
    batch_size: int = 32
    lr0: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    hidden: tuple[int, ...] = (64, 64)
    seed: int = 0


def cosine_lr(epoch: int, total: int, lr0: float) -> float:
    """``lr0 * (1 + cos(pi * epoch / total)) / 2``."""
    if total < 1 or not 0 <= epoch <= total:
        raise ValueError(f"epoch {epoch} outside [0, {total}]")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / total))


def sgd_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
             velocity: Sequence[np.ndarray], lr: float, momentum: float,
             weight_decay: float, decay_mask: Sequence[bool] | None = None) -> None:
    """In-place heavy-ball update: ``v = mu*v + g + wd*w``; ``w -= lr*v``.

    ``decay_mask`` selects which tensors receive weight decay (all by default).
    """
    if not len(params) == len(grads) == len(velocity):
        raise DimensionError("params, grads and velocity differ in length")
    if decay_mask is None:
        decay_mask = [True] * len(params)
    for w, g, v, dec in zip(params, grads, velocity, decay_mask):
        if w.shape != g.shape or w.shape != v.shape:
            raise DimensionError(f"sgd_step: shapes {w.shape}, {g.shape}, {v.shape} differ")
        d = g + weight_decay * w if dec and weight_decay else g
        v *= momentum
        v += d
        w -= lr * v


def _weight_mask(n_params: int) -> list[bool]:
    # Biases (odd positions) are excluded from weight decay.
    return [i % 2 == 0 for i in range(n_params)]


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return float("nan")
    return float(np.mean(np.argmax(logits, axis=1) == labels))


# ---------------------------------------------------------------------------
# teacher


def train_teacher(train: Dataset, cfg: TeacherConfig = TeacherConfig(),
                  test: Dataset | None = None) -> tuple[TeacherModel, float]:
    """Plain cross-entropy training of a ReLU MLP.

    Returns the model and its accuracy on ``test`` (or on ``train`` when no
    test split is given).
    """
    if len(train) == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    model = TeacherModel.init([train.n_features, *cfg.hidden, train.n_classes], rng)
    velocity = [np.zeros_like(p) for p in model.params]
    mask = _weight_mask(len(model.params))
    shuffle = np.random.default_rng([cfg.seed, 2])
    Y = one_hot(train.labels, train.n_classes)
    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg.epochs, cfg.lr0)
        for idx in _batches(len(train), cfg.batch_size, shuffle):
            tape = Tape()
            P = tape.watch(model.params)
            loss = ce_loss(model.forward(train.features[idx], P), Y[idx])
            if not math.isfinite(loss.item()):
                raise TrainingError(f"teacher loss became non-finite at epoch {epoch}")
            grads = tape.backward(loss)
            sgd_step(model.params, grads, velocity, lr, cfg.momentum, cfg.weight_decay, mask)
    eval_ds = test if test is not None else train
    return model, accuracy(model.logits(eval_ds.features), eval_ds.labels)


# ---------------------------------------------------------------------------
# student


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    losses: LossBreakdown
    train_acc: float
    test_acc: float


@dataclass
class StudentResult:
    net: SnnNetwork
    log: list[EpochRecord] = field(default_factory=list)
    config: TrainConfig | None = None

    def meta(self) -> dict[str, object]:
        c = self.config
        return {"trained_T": c.T, "alpha": c.alpha, "beta": c.beta, "tau": c.tau,
                "seed": c.seed, "loss_mode": c.loss_mode, "epochs": c.epochs}


def teacher_logits(teacher: TeacherModel | LogitsTable, x: np.ndarray, ids) -> np.ndarray:
    """Teacher outputs for a batch; table teachers are keyed by sample id."""
    if isinstance(teacher, LogitsTable):
        return teacher.lookup(ids)
    return teacher.logits(x)


def student_loss(net: SnnNetwork, params, x, z_teacher, y_onehot, cfg: TrainConfig):
    """Unroll, build all loss terms and the mode's objective on one batch."""
    zs = forward_unroll(net, x, cfg.T, params)
    terms = loss_terms(zs, z_teacher, y_onehot, cfg.weights, cfg.detach_ensemble)
    return zs, terms, objective(terms, cfg.weights, cfg.loss_mode)


def train_student(train: Dataset, teacher: TeacherModel | LogitsTable, cfg: TrainConfig,
                  test: Dataset | None = None) -> StudentResult:
    """Distill ``teacher`` into a fresh spiking MLP.

    Each batch unrolls the student for ``cfg.T`` steps, queries the teacher,
    evaluates every loss term and updates on the one chosen by
    ``cfg.loss_mode``.  Per-epoch means of all loss terms are logged.
    """
    if len(train) == 0:
        raise ValueError("cannot train on an empty dataset")
    if teacher.n_classes != train.n_classes:
        raise DimensionError(f"teacher emits {teacher.n_classes} logits, "
                             f"dataset has {train.n_classes} classes")
    rng = np.random.default_rng(cfg.seed)
    net = SnnNetwork.init([train.n_features, *cfg.hidden, train.n_classes], rng, cfg.lif)
    velocity = [np.zeros_like(p) for p in net.params]
    mask = _weight_mask(len(net.params))
    shuffle = np.random.default_rng([cfg.seed, 2])
    Y = one_hot(train.labels, train.n_classes)
    w = cfg.weights
    result = StudentResult(net, [], cfg)
    keys = ("sce", "skl", "twce", "twkl", "twsd")
    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg.epochs, cfg.lr0)
        sums = dict.fromkeys(keys, 0.0)
        correct = 0
        for idx in _batches(len(train), cfg.batch_size, shuffle):
            x = train.features[idx]
            zt = teacher_logits(teacher, x, idx)
            tape = Tape()
            P = tape.watch(net.params)
            zs, terms, loss = student_loss(net, P, x, zt, Y[idx], cfg)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(
                    f"non-finite {cfg.loss_mode} loss at epoch {epoch}: "
                    + ", ".join(f"{k}={t.item():.4g}" for k, t in terms.items()))
            grads = tape.backward(loss)
            for k in keys:
                sums[k] += terms[k].item() * len(idx)
            correct += int(np.sum(np.argmax(stack_mean(zs).data, axis=1) == train.labels[idx]))
            sgd_step(net.params, grads, velocity, lr, cfg.momentum, cfg.weight_decay, mask)
        means = {k: sums[k] / len(train) for k in keys}
        losses = LossBreakdown(
            sce=means["sce"], skl=means["skl"], skd=means["sce"] + w.alpha * means["skl"],
            twce=means["twce"], twkl=means["twkl"], twsd=means["twsd"],
            twkd=means["twce"] + w.alpha * means["twkl"],
            final=means["twce"] + w.alpha * means["twkl"] + w.beta * means["twsd"])
        test_acc = predict_accuracy(net, test, cfg.T) if test is not None and len(test) else float("nan")
        rec = EpochRecord(epoch + 1, lr, losses, correct / len(train), test_acc)
        result.log.append(rec)
        log.debug("epoch %d lr %.4g final %.4f train %.3f test %.3f",
                  rec.epoch, lr, losses.final, rec.train_acc, test_acc)
    return result


def predict_accuracy(net: SnnNetwork, ds: Dataset, T: int) -> float:
    zs = forward_unroll(net, ds.features, T)
    return accuracy(stack_mean(zs).data, ds.labels)


LOSS_COLUMNS = ("epoch", "lr", "sce", "skl", "skd", "twce", "twkl", "twsd", "twkd", "final",
                "train_acc", "test_acc")


def write_losses_csv(records: Sequence[EpochRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOSS_COLUMNS)
        for r in records:
            d = r.losses.as_dict()
            w.writerow([r.epoch, _fmt(r.lr)] + [_fmt(d[k]) for k in LOSS_COLUMNS[2:10]]
                       + [_fmt(r.train_acc), _fmt(r.test_acc)])


def batch_breakdown(net: SnnNetwork, x, z_teacher, labels, cfg: TrainConfig) -> LossBreakdown:
    """All loss values for one batch without building a tape."""
    zs = forward_unroll(net, x, cfg.T)
    terms = loss_terms(zs, z_teacher, one_hot(labels, net.n_classes), cfg.weights,
                       cfg.detach_ensemble)
    return _breakdown(terms, cfg.weights)
