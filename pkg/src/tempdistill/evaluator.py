"""Inference-time analysis of a trained spiking network.

All functions unroll once at the largest horizon they need and derive every
prefix result from the cached per-step logits.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset, _fmt
from .losses import softmax
from .snn import SnnNetwork, forward_unroll
from .tensor import ContractError


@dataclass
class SweepResult:
    trained_T: int
    accuracy: dict[int, float]


@dataclass
class EarlyExitResult:
    cs_threshold: float
    accuracy: float
    avg_timesteps: float


@dataclass
class FiringRates:
    per_timestep: np.ndarray
    overall: float


def _step_logits(net: SnnNetwork, data: Dataset, T: int, spike_log=None) -> np.ndarray:
    """Per-step logits stacked as ``(T, samples, classes)``."""
    zs = forward_unroll(net, data.features, T, spike_log=spike_log)
    return np.stack([z.data for z in zs])


def _prefix_means(z: np.ndarray) -> np.ndarray:
    """Running ensembles; row ``k`` is the mean of steps ``1..k+1``.

    Summation order and the final ``* (1/k)`` match ``stack_mean`` so the
    results agree bit-for-bit with the training-side ensemble.
    """
    out = np.empty_like(z)
    running = z[0]
    out[0] = running
    for k in range(1, len(z)):
        running = running + z[k]
        out[k] = running * (1.0 / (k + 1))
    return out


def eval_at(net: SnnNetwork, data: Dataset, T_k: int, horizon: int | None = None) -> float:
    """Accuracy of the argmax of the first-``T_k``-step ensemble."""
    horizon = T_k if horizon is None else horizon
    if not 1 <= T_k <= horizon:
        raise ContractError(f"T_k must lie in [1, {horizon}], got {T_k}")
    if len(data) == 0:
        return float("nan")
    ens = _prefix_means(_step_logits(net, data, T_k))[-1]
    return float(np.mean(np.argmax(ens, axis=1) == data.labels))


def full_range_sweep(net: SnnNetwork, data: Dataset, trained_T: int) -> SweepResult:
    """``eval_at`` for every prefix length from one unroll at ``trained_T``."""
    if trained_T < 1:
        raise ContractError(f"trained_T must be positive, got {trained_T}")
    if len(data) == 0:
        return SweepResult(trained_T, {k: float("nan") for k in range(1, trained_T + 1)})
    ens = _prefix_means(_step_logits(net, data, trained_T))
    acc = {k: float(np.mean(np.argmax(ens[k - 1], axis=1) == data.labels))
           for k in range(1, trained_T + 1)}
    return SweepResult(trained_T, acc)


def exit_steps(z: np.ndarray, cs: float, ens: np.ndarray | None = None) -> np.ndarray:
    """Exit timestep (1-based) per sample for a confidence threshold.

    A sample leaves at the first step whose running-ensemble max softmax
    probability reaches ``cs``, or at the last step.
    """
    ens = _prefix_means(z) if ens is None else ens
    conf = softmax(ens).max(axis=-1)          # (T, samples)
    hit = conf >= cs
    hit[-1] = True
    return np.argmax(hit, axis=0) + 1


def early_exit_eval(net: SnnNetwork, data: Dataset, cs: float, T: int) -> EarlyExitResult:
    if not 0.0 < cs <= 1.0:
        raise ContractError(f"confidence threshold must lie in (0, 1], got {cs}")
    return early_exit_grid(net, data, [cs], T)[0]


def early_exit_grid(net: SnnNetwork, data: Dataset, thresholds: Sequence[float],
                    T: int) -> list[EarlyExitResult]:
    """Confidence-based early exit for several thresholds from one unroll."""
    for cs in thresholds:
        if not 0.0 < cs <= 1.0:
            raise ContractError(f"confidence threshold must lie in (0, 1], got {cs}")
    if len(data) == 0:
        return [EarlyExitResult(cs, float("nan"), float("nan")) for cs in thresholds]
    z = _step_logits(net, data, T)
    ens = _prefix_means(z)
    out = []
    for cs in thresholds:
        steps = exit_steps(z, cs, ens)
        pred = np.argmax(ens[steps - 1, np.arange(len(data))], axis=1)
        out.append(EarlyExitResult(float(cs), float(np.mean(pred == data.labels)),
                                   float(np.mean(steps))))
    return out


def firing_rate_stats(net: SnnNetwork, data: Dataset, T: int) -> FiringRates:
    """Mean spike value over all hidden neurons and samples, per step and overall."""
    if T < 1:
        raise ContractError(f"T must be positive, got {T}")
    if len(data) == 0:
        return FiringRates(np.full(T, np.nan), float("nan"))
    spikes: list = []
    forward_unroll(net, data.features, T, spike_log=spikes)
    per_t = np.array([np.concatenate([s.ravel() for s in layers]).mean() for layers in spikes])
    return FiringRates(per_t, float(per_t.mean()))


# ---------------------------------------------------------------------------
# CSV writers


def write_sweep_csv(results: Sequence[SweepResult], path) -> None:
    """Rows are trained horizons, columns inference prefix lengths."""
    width = max((r.trained_T for r in results), default=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trained_T"] + [f"T{k}" for k in range(1, width + 1)])
        for r in results:
            w.writerow([r.trained_T] + [_fmt(r.accuracy[k]) if k in r.accuracy else ""
                                        for k in range(1, width + 1)])


def write_early_exit_csv(results: Sequence[EarlyExitResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cs", "acc", "T_avg"])
        for r in results:
            w.writerow([_fmt(r.cs_threshold), _fmt(r.accuracy), _fmt(r.avg_timesteps)])


def write_firing_rates_csv(rates: FiringRates, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "rate"])
        for t, r in enumerate(rates.per_timestep, start=1):
            w.writerow([t, _fmt(r)])
        w.writerow(["mean", _fmt(rates.overall)])


def dump_logits(net: SnnNetwork, data: Dataset, T: int, path) -> None:
    """Write per-step logits plus the full ensemble row (``t = ens``) per sample."""
    n = net.n_classes
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "label", "t"] + [f"z_{i + 1}" for i in range(n)])
        if len(data) == 0:
            return
        z = _step_logits(net, data, T)
        ens = _prefix_means(z)[-1]
        for i in range(len(data)):
            label = int(data.labels[i])
            for t in range(T):
                w.writerow([i, label, t + 1] + [_fmt(v) for v in z[t, i]])
            w.writerow([i, label, "ens"] + [_fmt(v) for v in ens[i]])
