"""Distill an MLP teacher into a spiking MLP and compare prefix accuracies.

Trains one student with the temporal-wise objective and one with standard
ensemble-level KD, then evaluates both at every prefix length.  About 20 s.

Run: python3 demos/distill_spiral.py [seed]
"""
import sys

from tempdistill.data import spiral_splits
from tempdistill.evaluator import firing_rate_stats, full_range_sweep
from tempdistill.trainer import TeacherConfig, TrainConfig, train_student, train_teacher

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
train, test = spiral_splits(classes=3, train_per_class=200, test_per_class=100, noise=0.2, seed=0)
teacher, acc = train_teacher(train, TeacherConfig(seed=seed), test)
print(f"teacher test accuracy {acc:.3f}")

rows = {}
for mode in ("temporal_kd_full", "standard_kd"):
    res = train_student(train, teacher, TrainConfig(T=6, seed=seed, loss_mode=mode), test)
    rows[mode] = full_range_sweep(res.net, test, 6).accuracy
    last = res.log[-1].losses
    print(f"{mode}: final-epoch TWKD {last.twkd:.4f} >= SKD {last.skd:.4f}; "
          f"mean firing rate {firing_rate_stats(res.net, test, 6).overall:.3f}")

print("\ninference prefix   " + "  ".join(f"T={k}" for k in range(1, 7)))
for mode, acc in rows.items():
    print(f"{mode:18s} " + "  ".join(f"{acc[k]:.3f}" for k in range(1, 7)))
