"""Cached desk-scale training runs shared by the acceptance tests.

The spiral data is drawn once (data seed 0); each run seed changes the
teacher and student initialization and the batch order.
"""
from __future__ import annotations

import time
from functools import lru_cache

from tempdistill.data import spiral_splits
from tempdistill.evaluator import full_range_sweep
from tempdistill.trainer import TeacherConfig, TrainConfig, train_student, train_teacher

SEEDS = (0, 1, 2, 3, 4)
T = 6
MODES = ("temporal_kd_full", "standard_kd", "twce_only", "twce_twsd", "twce_twkl")
TIMINGS: dict[str, float] = {}


@lru_cache(maxsize=None)
def splits():
    return spiral_splits(3, 200, 100, 0.2, 0)


@lru_cache(maxsize=None)
def teacher(seed: int):
    train, test = splits()
    start = time.perf_counter()
    out = train_teacher(train, TeacherConfig(seed=seed), test)
    TIMINGS[f"teacher{seed}"] = time.perf_counter() - start
    return out


@lru_cache(maxsize=None)
def student(seed: int, mode: str):
    train, test = splits()
    model, _ = teacher(seed)
    cfg = TrainConfig(T=T, alpha=0.2, beta=0.5, tau=4.0, seed=seed, loss_mode=mode)
    start = time.perf_counter()
    res = train_student(train, model, cfg, test)
    TIMINGS[f"{mode}{seed}"] = time.perf_counter() - start
    return res, full_range_sweep(res.net, test, T)
