"""Acceptance criteria, one test per criterion.

Each test records a one-line PASS/FAIL verdict that is printed in the
terminal summary (see conftest.py) and also to stdout.
"""
from __future__ import annotations

import time

import numpy as np
import pytest

import runs
from tempdistill.bounds import CERTIFIED, TOL
from tempdistill.cli import run
from tempdistill.evaluator import early_exit_grid
from tempdistill.gradcheck import gradcheck_all_modes
from tempdistill.losses import LossWeights, compute_all, one_hot

VERDICTS: dict[int, str] = {}


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS[n] = line
    print(line)


def test_1_bound_certification(tmp_path):
    start = time.perf_counter()
    code = run(["verify-bounds", "--trials", "1000", "--seed", "0", "--alpha", "0.2",
                "--taus", "1,2,4", "--out", str(tmp_path)])
    elapsed = time.perf_counter() - start
    rows = [line.split(",") for line in (tmp_path / "bounds.csv").read_text().splitlines()[1:]]
    worst = max(float(r[4]) for r in rows if r[0] in CERTIFIED)
    ok = code == 0 and worst <= TOL and elapsed < 10
    verdict(1, ok, f"max violation {worst:.2e} (tol {TOL:g}), {elapsed:.1f} s")
    assert ok


def test_2_equality_conditions():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(200):
        n, T = int(rng.integers(2, 11)), int(rng.integers(1, 9))
        z = rng.uniform(-5, 5, (4, n))
        b = compute_all([z] * T, rng.uniform(-5, 5, (4, n)), one_hot(rng.integers(0, n, 4), n),
                        LossWeights(0.2, 0.5, float(rng.choice([1.0, 2.0, 4.0]))))
        worst = max(worst, abs(b.twce - b.sce), abs(b.twkd - b.skd))
    ok = worst <= 1e-10
    verdict(2, ok, f"max |TWCE-SCE|, |TWKD-SKD| = {worst:.2e}")
    assert ok


def test_3_gradient_correctness():
    start = time.perf_counter()
    results = gradcheck_all_modes(seed=0, sizes=(2, 8, 8, 4), T=3)
    elapsed = time.perf_counter() - start
    worst = max(r.max_rel_error for r in results)
    ok = worst < 1e-4 and elapsed < 60 and len(results) == 5
    verdict(3, ok, f"max rel error {worst:.2e} over {len(results)} modes, {elapsed:.1f} s")
    assert ok


def test_4_training_trend():
    teacher_acc = [runs.teacher(s)[1] for s in runs.SEEDS]
    full = {s: runs.student(s, "temporal_kd_full")[1].accuracy for s in runs.SEEDS}
    skd = {s: runs.student(s, "standard_kd")[1].accuracy for s in runs.SEEDS}
    train_time = sum(v for k, v in runs.TIMINGS.items()
                     if k.startswith(("teacher", "temporal_kd_full", "standard_kd")))
    wins = [s for s in runs.SEEDS if all(full[s][k] >= skd[s][k] for k in (1, 2, 3))]
    for s in runs.SEEDS:
        print(f"  seed {s}: teacher {teacher_acc[s]:.3f}  final T1-3,6 "
              f"{[round(full[s][k], 3) for k in (1, 2, 3, 6)]}  skd "
              f"{[round(skd[s][k], 3) for k in (1, 2, 3, 6)]}")
    teacher_ok = min(teacher_acc) >= 0.95
    student_ok = min(full[s][6] for s in runs.SEEDS) >= 0.90
    ok = teacher_ok and student_ok and len(wins) >= 4 and train_time < 600
    verdict(4, ok, f"teacher min {min(teacher_acc):.3f}, student T6 min "
                   f"{min(full[s][6] for s in runs.SEEDS):.3f}, prefix wins {len(wins)}/5 "
                   f"(need 4), training {train_time:.0f} s")
    assert teacher_ok and student_ok
    assert train_time < 600
    assert len(wins) >= 4


def test_5_ablation_ordering():
    mean = {m: float(np.mean([runs.student(s, m)[1].accuracy[runs.T] for s in runs.SEEDS]))
            for m in runs.MODES if m != "standard_kd"}
    best_single = max(mean["twce_twsd"], mean["twce_twkl"])
    ok = mean["temporal_kd_full"] >= mean["twce_only"] and \
        mean["temporal_kd_full"] >= best_single - 0.005
    verdict(5, ok, "mean acc " + ", ".join(f"{m} {a:.4f}" for m, a in mean.items()))
    assert ok


def test_6_early_exit():
    res, sweep = runs.student(0, "temporal_kd_full")
    _, test = runs.splits()
    grid = [0.7, 0.8, 0.9, 0.99, 0.999]
    out = early_exit_grid(res.net, test, grid, runs.T)
    steps = [r.avg_timesteps for r in out]
    gap = abs(out[-1].accuracy - sweep.accuracy[runs.T])
    ok = all(a <= b for a, b in zip(steps, steps[1:])) and gap <= 0.01
    verdict(6, ok, f"T_avg {[round(s, 3) for s in steps]}, |acc(0.999) - acc(T)| = {gap:.4f}")
    assert ok


def test_7_logged_loss_corollary():
    checked, bad = 0, []
    for s in runs.SEEDS:
        for m in runs.MODES:
            for rec in runs.student(s, m)[0].log:
                checked += 1
                if not (rec.losses.twkd >= rec.losses.skd and rec.losses.twce >= rec.losses.sce):
                    bad.append((m, s, rec.epoch))
    ok = not bad
    verdict(7, ok, f"{checked} logged epochs, {len(bad)} violations")
    assert ok, bad[:5]


def test_8_reproducibility(tmp_path):
    codes = [run(["train", "--seed", "3", "--out", str(tmp_path / d)]) for d in ("a", "b")]
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
               for f in ("model.ckpt", "losses.csv"))
    ok = codes == [0, 0] and same
    verdict(8, ok, "model.ckpt and losses.csv byte-identical" if same else "outputs differ")
    assert ok
