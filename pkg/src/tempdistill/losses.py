"""Logit-level distillation losses over temporally unrolled outputs.

Every loss is a batch mean.  Soft-label terms use the cross-entropy form of
the temperature-scaled KL divergence (the teacher entropy is dropped since
it carries no gradient), scaled by ``tau**2``.  Teacher targets are always
constants; the student's own ensemble target is detached unless the caller
passes ``detach_ensemble=False``.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np
from scipy import special

from .tensor import (
    ContractError,
    DimensionError,
    Tensor,
    add,
    exp,
    log_softmax,
    mean,
    mul,
    scale,
    stack_mean,
    tensor_sum,
)

LOSS_MODES = ("standard_kd", "temporal_kd_full", "twce_only", "twce_twsd", "twce_twkl")


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.2
    beta: float = 0.5
    tau: float = 4.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")


@dataclass(frozen=True)
class LossBreakdown:
    sce: float
    skl: float
    skd: float
    twce: float
    twkl: float
    twsd: float
    twkd: float
    final: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def softmax(z) -> np.ndarray:
    """Max-shifted softmax along the last axis (plain array in and out)."""
    z = np.asarray(z.data if isinstance(z, Tensor) else z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def entropy(p: np.ndarray) -> np.ndarray:
    return -(special.xlogy(p, p)).sum(axis=-1)


def ensemble_logits(z_list: Sequence, T_k: int | None = None) -> Tensor:
    """Mean of the first ``T_k`` timestep logits (all of them by default)."""
    T = len(z_list)
    if T_k is None:
        T_k = T
    if not 1 <= T_k <= T:
        raise ContractError(f"T_k must lie in [1, {T}], got {T_k}")
    return stack_mean([_t(z) for z in z_list[:T_k]])


def _check_one_hot(y: np.ndarray, shape) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != tuple(shape):
        raise DimensionError(f"labels {y.shape} do not match logits {tuple(shape)}")
    if not (np.isin(y, (0.0, 1.0)).all() and (y.sum(axis=-1) == 1).all()):
        raise ContractError("labels must be one-hot rows")
    return y


def one_hot(labels, n: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, n))
    out[np.arange(labels.size), labels] = 1.0
    return out


def _soft_ce(z: Tensor, target_probs: np.ndarray) -> Tensor:
    # batch mean of -sum_i p_i log S_i(z)
    per_row = tensor_sum(mul(Tensor(target_probs), log_softmax(z)), axis=1)
    return scale(mean(per_row), -1.0)


def ce_loss(z, y) -> Tensor:
    z = _t(z)
    return _soft_ce(z, _check_one_hot(y, z.shape))


def kl_soft_loss(z_student, z_teacher, tau: float) -> Tensor:
    """``tau**2``-scaled soft cross-entropy; the teacher side is a constant."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    zs = _t(z_student)
    zt = z_teacher.data if isinstance(z_teacher, Tensor) else np.asarray(z_teacher, np.float64)
    if zs.shape != zt.shape:
        raise DimensionError(f"student {zs.shape} and teacher {zt.shape} logits differ in shape")
    return scale(_soft_ce(scale(zs, 1.0 / tau), softmax(zt / tau)), tau * tau)


def loss_terms(z_list, z_teacher, y, w: LossWeights, detach_ensemble: bool = True,
               ensemble_target: np.ndarray | None = None) -> dict[str, Tensor]:
    """The base losses as differentiable tensors.

    ``ensemble_target`` replaces the detached self-distillation target with
    fixed logits; finite-difference checks use it to hold the target still.
    """
    z_list = [_t(z) for z in z_list]
    if not z_list:
        raise ContractError("need at least one timestep")
    z_ens = ensemble_logits(z_list)
    y = _check_one_hot(y, z_list[0].shape)

    sce = ce_loss(z_ens, y)
    skl = kl_soft_loss(z_ens, z_teacher, w.tau)
    twce = stack_mean([ce_loss(z, y) for z in z_list])
    twkl = stack_mean([kl_soft_loss(z, z_teacher, w.tau) for z in z_list])
    if detach_ensemble:
        target = z_ens.data if ensemble_target is None else ensemble_target
        twsd = stack_mean([kl_soft_loss(z, target, w.tau) for z in z_list])
    else:
        # Gradient also flows through the ensemble used as target.
        terms = []
        for z in z_list:
            p_target = exp(log_softmax(scale(z_ens, 1.0 / w.tau)))
            ls = log_softmax(scale(z, 1.0 / w.tau))
            terms.append(scale(mean(tensor_sum(mul(p_target, ls), axis=1)), -w.tau ** 2))
        twsd = stack_mean(terms)
    return {"sce": sce, "skl": skl, "twce": twce, "twkl": twkl, "twsd": twsd}


def objective(terms: dict[str, Tensor], w: LossWeights, mode: str) -> Tensor:
    """Training loss selected by ``mode``."""
    if mode == "standard_kd":
        return add(terms["sce"], scale(terms["skl"], w.alpha))
    if mode == "temporal_kd_full":
        return add(add(terms["twce"], scale(terms["twkl"], w.alpha)),
                   scale(terms["twsd"], w.beta))
    if mode == "twce_only":
        return terms["twce"]
    if mode == "twce_twsd":
        return add(terms["twce"], scale(terms["twsd"], w.beta))
    if mode == "twce_twkl":
        return add(terms["twce"], scale(terms["twkl"], w.alpha))
    raise ValueError(f"unknown loss mode {mode!r}; expected one of {LOSS_MODES}")


def breakdown(terms: dict[str, Tensor], w: LossWeights) -> LossBreakdown:
    v = {k: t.item() for k, t in terms.items()}
    return LossBreakdown(
        sce=v["sce"], skl=v["skl"], skd=v["sce"] + w.alpha * v["skl"],
        twce=v["twce"], twkl=v["twkl"], twsd=v["twsd"],
        twkd=v["twce"] + w.alpha * v["twkl"],
        final=v["twce"] + w.alpha * v["twkl"] + w.beta * v["twsd"],
    )


def compute_all(z_list, z_teacher, y, w: LossWeights, detach_ensemble: bool = True
                ) -> LossBreakdown:
    return breakdown(loss_terms(z_list, z_teacher, y, w, detach_ensemble), w)
