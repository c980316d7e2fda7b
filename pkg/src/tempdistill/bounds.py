"""Numerical certification of the temporal-wise upper bounds.

Each ``check_*`` returns a slack (upper side minus lower side), so a valid
instance has slack >= -tol.  The losses themselves serve as the oracle:
both sides are evaluated with the same loss functions used for training.

Inequalities certified, with ``T_k`` a prefix length:

* ``lemma1``     TWCE  >= SCE
* ``prop2``      TWKD  >= SKD
* ``prop3``      (T / T_k) * TWKD(T) >= SKD(T_k)
* ``split``      SKL(T) <= (T_k/T) SKL(T_k) + (1/T) sum_{t>T_k} KL_t
* ``split_upper`` the right side above <= TWKL(T)

``split_literal`` evaluates the first split with a ``(T - T_k)/T**2``
coefficient on the trailing terms instead of ``1/T``.  That form is not a
valid bound (it already fails for constant logits) and is reported for
information only.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Dataset, LogitsTable, _fmt
from .losses import LossWeights, compute_all, kl_soft_loss, one_hot
from .mlp import TeacherModel
from .snn import SnnNetwork, forward_unroll
from .tensor import ContractError

TOL = 1e-9
CERTIFIED = ("lemma1", "prop2", "prop3", "split", "split_upper")
INFORMATIONAL = ("split_literal",)


def check_lemma1(z_list, y) -> float:
    n = np.asarray(z_list[0]).shape[-1]
    b = compute_all(z_list, np.zeros((len(y), n)), y, LossWeights(0.0, 0.0, 1.0))
    return b.twce - b.sce


def check_prop2(z_list, z_teacher, y, w: LossWeights) -> float:
    b = compute_all(z_list, z_teacher, y, w)
    return b.twkd - b.skd


def _prop3(full, prefix, T: int, T_k: int) -> float:
    return (T / T_k) * full.twkd - prefix.skd


def _split(skl_T: float, skl_k: float, per_step: Sequence[float], T: int, T_k: int) -> SplitSlack:
    tail = sum(per_step[T_k:])
    twkl = sum(per_step) / T
    segmented = (T_k / T) * skl_k + tail / T
    literal = (T_k / T) * skl_k + (T - T_k) / T ** 2 * tail
    return SplitSlack(segmented - skl_T, twkl - segmented, literal - skl_T)


def check_prop3(z_list, z_teacher, y, w: LossWeights, T_k: int) -> float:
    T = len(z_list)
    if not 1 <= T_k <= T:
        raise ContractError(f"T_k must lie in [1, {T}], got {T_k}")
    full = compute_all(z_list, z_teacher, y, w)
    prefix = compute_all(z_list[:T_k], z_teacher, y, w)
    return _prop3(full, prefix, T, T_k)


@dataclass(frozen=True)
class SplitSlack:
    split: float
    upper: float
    literal: float


def check_jensen_split(z_list, z_teacher, tau: float, T_k: int) -> SplitSlack:
    T = len(z_list)
    if not 1 <= T_k < T:
        raise ContractError(f"T_k must lie in [1, {T - 1}], got {T_k}")
    per_step = [kl_soft_loss(z, z_teacher, tau).item() for z in z_list]
    shape = np.asarray(z_teacher).shape
    w = LossWeights(0.0, 0.0, tau)
    y = one_hot(np.zeros(shape[0], dtype=int), shape[1])
    skl_T = compute_all(z_list, z_teacher, y, w).skl
    skl_k = compute_all(z_list[:T_k], z_teacher, y, w).skl
    return _split(skl_T, skl_k, per_step, T, T_k)


# ---------------------------------------------------------------------------
# reports


@dataclass
class InequalityStats:
    trials: int = 0
    min_slack: float = float("inf")

    def add(self, slack: float) -> None:
        self.trials += 1
        self.min_slack = min(self.min_slack, slack)

    @property
    def max_violation(self) -> float:
        return max(0.0, -self.min_slack) if self.trials else 0.0


@dataclass
class BoundReport:
    trials: int
    tolerance: float = TOL
    stats: dict[str, InequalityStats] = field(
        default_factory=lambda: {k: InequalityStats() for k in CERTIFIED + INFORMATIONAL})
    equality_residual: float = 0.0

    @property
    def passed(self) -> bool:
        return all(self.stats[k].max_violation <= self.tolerance for k in CERTIFIED)

    def to_text(self) -> str:
        lines = [f"trials: {self.trials}  tolerance: {self.tolerance:g}"]
        for k, s in self.stats.items():
            role = "certified" if k in CERTIFIED else "info"
            verdict = ("ok" if s.max_violation <= self.tolerance else "VIOLATED")
            lines.append(f"{k:14s} {role:9s} checks={s.trials:6d} min_slack={s.min_slack:+.3e} "
                         f"max_violation={s.max_violation:.3e} {verdict}")
        lines.append(f"equality residual (constant logits): {self.equality_residual:.3e}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["inequality", "role", "trials", "min_slack", "max_violation"])
            for k, s in self.stats.items():
                w.writerow([k, "certified" if k in CERTIFIED else "info", s.trials,
                            _fmt(s.min_slack), _fmt(s.max_violation)])


def _check_instance(report: BoundReport, z_list, z_teacher, y, w: LossWeights) -> None:
    # Same arithmetic as the public check_* functions, with each prefix
    # breakdown computed once.
    T = len(z_list)
    prefixes = [compute_all(z_list[:k], z_teacher, y, w) for k in range(1, T + 1)]
    full = prefixes[-1]
    per_step = [kl_soft_loss(z, z_teacher, w.tau).item() for z in z_list]
    report.stats["lemma1"].add(full.twce - full.sce)
    report.stats["prop2"].add(full.twkd - full.skd)
    for T_k in range(1, T + 1):
        report.stats["prop3"].add(_prop3(full, prefixes[T_k - 1], T, T_k))
    for T_k in range(1, T):
        s = _split(full.skl, prefixes[T_k - 1].skl, per_step, T, T_k)
        report.stats["split"].add(s.split)
        report.stats["split_upper"].add(s.upper)
        report.stats["split_literal"].add(s.literal)


def _equality_residual(z_list, z_teacher, y, w: LossWeights) -> float:
    const = [np.array(z_list[0]) for _ in z_list]
    b = compute_all(const, z_teacher, y, w)
    return max(abs(b.twce - b.sce), abs(b.twkd - b.skd))


def random_trials(trials: int, seed: int, alpha: float = 0.2, taus: Sequence[float] = (1.0, 2.0, 4.0),
                  n_range=(2, 10), T_range=(2, 8), batch: int = 1, low: float = -5.0,
                  high: float = 5.0) -> BoundReport:
    """Check every inequality on random logits.

    Each trial draws its own class count, horizon and temperature from an
    independent stream spawned off ``seed``.
    """
    report = BoundReport(trials)
    for child in np.random.SeedSequence(seed).spawn(trials):
        rng = np.random.default_rng(child)
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        T = int(rng.integers(T_range[0], T_range[1] + 1))
        tau = float(rng.choice(taus))
        w = LossWeights(alpha, 0.5, tau)
        z_list = [rng.uniform(low, high, size=(batch, n)) for _ in range(T)]
        z_teacher = rng.uniform(low, high, size=(batch, n))
        y = one_hot(rng.integers(0, n, size=batch), n)
        _check_instance(report, z_list, z_teacher, y, w)
        report.equality_residual = max(report.equality_residual,
                                       _equality_residual(z_list, z_teacher, y, w))
    return report


def verify_on_model(net: SnnNetwork, dataset: Dataset, w: LossWeights, trials: int, T: int,
                    teacher: TeacherModel | LogitsTable | None = None) -> BoundReport:
    """Run every check on live network outputs, one sample per trial.

    Uses the first ``trials`` samples.  Without a teacher the soft target is
    uniform (zero teacher logits).
    """
    if len(dataset) == 0:
        raise ValueError("cannot verify bounds on an empty dataset")
    m = min(trials, len(dataset))
    x = dataset.features[:m]
    zs = np.stack([z.data for z in forward_unroll(net, x, T)])
    if teacher is None:
        zt = np.zeros((m, net.n_classes))
    elif isinstance(teacher, LogitsTable):
        zt = teacher.lookup(range(m))
    else:
        zt = teacher.logits(x)
    y = one_hot(dataset.labels[:m], net.n_classes)
    report = BoundReport(m)
    for i in range(m):
        z_list = [zs[t, i:i + 1] for t in range(T)]
        _check_instance(report, z_list, zt[i:i + 1], y[i:i + 1], w)
        report.equality_residual = max(report.equality_residual,
                                       _equality_residual(z_list, zt[i:i + 1], y[i:i + 1], w))
    return report
